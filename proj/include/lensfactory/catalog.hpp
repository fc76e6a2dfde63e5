#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lf {

// Fraunhofer reference lines, nm.
inline constexpr double kLambdaD = 587.56;
inline constexpr double kLambdaF = 486.13;
inline constexpr double kLambdaC = 656.27;

struct GlassSpec {
  std::string name;
  double n_d = 1.5168;
  double v_d = 64.17;

  bool operator==(const GlassSpec&) const = default;
};

/// n(lambda) from a two-term Cauchy model A + B / lambda^2 anchored so that
/// n(d) = n_d and n(F) - n(C) = (n_d - 1) / v_d. Throws std::out_of_range
/// outside [380, 1100] nm.
double refractive_index(const GlassSpec& glass, double wavelength_nm);

struct CauchyCoefficients {
  double a;
  double b;  // nm^2
};
CauchyCoefficients cauchy_coefficients(const GlassSpec& glass);

enum class LensKind { DCX, DCV, PCX, PCV, Meniscus, AchromatPos, AchromatNeg };

std::string_view to_string(LensKind kind);
std::optional<LensKind> parse_lens_kind(std::string_view text);

struct LensElement {
  std::string stock_id;
  std::string vendor;
  LensKind kind = LensKind::DCX;
  double diameter = 0;      // mm
  double focal_length = 0;  // mm, signed
  std::vector<double> radii;        // mm, signed, 0 = flat
  std::vector<double> thicknesses;  // mm
  std::vector<GlassSpec> glasses;
  double cost = 0;
  std::string coating;

  /// Diopters.
  double power() const { return 1000.0 / focal_length; }
  bool positive() const { return focal_length > 0; }
  /// Largest |1/R| over the element's surfaces, mm^-1.
  double max_curvature() const;
  /// Flipping yields the same surface sequence.
  bool flip_symmetric() const;
  double total_thickness() const;

  /// Same geometry, glass and kind; coating, cost and ids may differ.
  bool same_optics(const LensElement& other) const;

  /// Throws ValidationError describing the first violated invariant.
  void validate() const;
};

using ElementPtr = std::shared_ptr<const LensElement>;

enum class PowerSign { Positive, Negative };

/// Merged element catalog. Immutable after construction.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<LensElement> elements);

  std::span<const ElementPtr> elements() const { return elements_; }
  std::size_t size() const { return elements_.size(); }
  std::size_t positive_count() const { return positive_.size(); }
  std::size_t negative_count() const { return negative_.size(); }
  std::span<const ElementPtr> subset(PowerSign sign) const {
    return sign == PowerSign::Positive ? positive_ : negative_;
  }

  ElementPtr find(std::string_view stock_id) const;

  /// Elements of the given sign with |power| in |power_center| * [1 - power_tol, 1 + power_tol]
  /// and diameter in diam_center * [1 - diam_tol, 1 + diam_tol]. Results are ordered by
  /// ascending |power|, then stock id.
  std::vector<ElementPtr> query(double power_center, double power_tol, double diam_center,
                                double diam_tol, PowerSign sign) const;

 private:
  std::vector<ElementPtr> elements_;
  // Each sorted by (|power|, stock_id); used as the (power, diameter) index.
  std::vector<ElementPtr> positive_;
  std::vector<ElementPtr> negative_;
};

/// Collapses entries that differ only in coating (and id/vendor/cost), keeping the
/// cheapest. Input order of first occurrence is preserved.
Catalog merge_coating_variants(std::vector<LensElement> raw);

/// Reads the CSV catalog format and merges coating variants.
Catalog load_catalog(const std::filesystem::path& path);
std::vector<LensElement> parse_catalog_csv(std::string_view text);
std::string to_catalog_csv(std::span<const LensElement> rows);
std::string to_catalog_csv(const Catalog& catalog);

struct SyntheticCounts {
  int dcx = 220;
  int pcx = 270;
  int meniscus_pos = 30;
  int achromat_pos = 250;
  int dcv = 45;
  int pcv = 50;
  int meniscus_neg = 5;
  int achromat_neg = 15;
  /// Extra raw rows that duplicate an element with a different coating.
  int coating_variants = 120;

  int positive() const { return dcx + pcx + meniscus_pos + achromat_pos; }
  int negative() const { return dcv + pcv + meniscus_neg + achromat_neg; }
  /// Scales the default proportions to the requested sign totals.
  static SyntheticCounts with_totals(int positive, int negative);
};

/// Raw rows including coating variants, deterministic for a seed.
std::vector<LensElement> generate_synthetic_rows(std::uint64_t seed, const SyntheticCounts& counts);
Catalog generate_synthetic_catalog(std::uint64_t seed, const SyntheticCounts& counts = {});

/// Thick-lens focal length of one glass piece (mm). Radii 0 = flat.
double lensmaker_focal_length(double r1, double r2, double thickness, double n);

}  // namespace lf
