#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace mixfc {

/// Distribution families accepted in mixture submissions. Tags and
/// parameter order follow the hub's family table (see family_info()).
enum class Family {
  Beta,
  Cauchy,
  Lnorm,
  Logis,
  Unif,
  Lst,
  Weibull,
  Fd,
  Norm,
  Chisq,
  Gammad,
  Exp,
  Binom,
  Dirac,
  Pois,
  Hyper,
  Nbinom,
  Geom,
};

inline constexpr std::size_t kFamilyCount = 18;

struct FamilyInfo {
  Family family;
  std::string_view tag;
  // Required parameter count, and the count including optional trailing ones.
  int required;
  int maximum;
  bool discrete;
  std::array<std::string_view, 3> param_names;
};

inline constexpr std::array<FamilyInfo, kFamilyCount> kFamilies{{
    {Family::Beta, "Beta", 2, 2, false, {"shape1", "shape2", ""}},
    {Family::Cauchy, "Cauchy", 2, 2, false, {"location", "scale", ""}},
    {Family::Lnorm, "Lnorm", 2, 2, false, {"meanlog", "sdlog", ""}},
    {Family::Logis, "Logis", 2, 2, false, {"location", "scale", ""}},
    {Family::Unif, "Unif", 2, 2, false, {"min", "max", ""}},
    {Family::Lst, "Lst", 3, 3, false, {"location", "scale", "df"}},
    {Family::Weibull, "Weibull", 2, 2, false, {"shape", "scale", ""}},
    {Family::Fd, "Fd", 2, 2, false, {"df1", "df2", ""}},
    {Family::Norm, "Norm", 2, 2, false, {"mean", "sd", ""}},
    {Family::Chisq, "Chisq", 1, 2, false, {"df", "ncp", ""}},
    {Family::Gammad, "Gammad", 2, 2, false, {"scale", "shape", ""}},
    {Family::Exp, "Exp", 1, 1, false, {"rate", "", ""}},
    {Family::Binom, "Binom", 2, 2, true, {"size", "prob", ""}},
    {Family::Dirac, "Dirac", 1, 1, true, {"location", "", ""}},
    {Family::Pois, "Pois", 1, 1, true, {"lambda", "", ""}},
    {Family::Hyper, "Hyper", 3, 3, true, {"m", "n", "k"}},
    {Family::Nbinom, "Nbinom", 2, 2, true, {"n", "p", ""}},
    {Family::Geom, "Geom", 1, 1, true, {"prob", "", ""}},
}};

constexpr const FamilyInfo& family_info(Family f) { return kFamilies[static_cast<std::size_t>(f)]; }

constexpr std::string_view to_string(Family f) { return family_info(f).tag; }

constexpr bool is_discrete(Family f) { return family_info(f).discrete; }

/// Case-insensitive tag lookup ("norm", "Norm" and "NORM" all resolve).
inline std::optional<Family> parse_family(std::string_view tag) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string wanted = lower(tag);
  for (const auto& info : kFamilies) {
    if (lower(info.tag) == wanted) return info.family;
  }
  return std::nullopt;
}

}  // namespace mixfc
