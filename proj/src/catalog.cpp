#include "lensfactory/catalog.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "lensfactory/error.hpp"
#include "lensfactory/rng.hpp"

namespace lf {

CauchyCoefficients cauchy_coefficients(const GlassSpec& glass) {
  const double inv_f = 1.0 / (kLambdaF * kLambdaF);
  const double inv_c = 1.0 / (kLambdaC * kLambdaC);
  const double b = ((glass.n_d - 1.0) / glass.v_d) / (inv_f - inv_c);
  const double a = glass.n_d - b / (kLambdaD * kLambdaD);
  return {a, b};
}

double refractive_index(const GlassSpec& glass, double wavelength_nm) {
  if (!(wavelength_nm >= 380.0 && wavelength_nm <= 1100.0))
    throw std::out_of_range("wavelength " + std::to_string(wavelength_nm) +
                            " nm outside [380, 1100]");
  if (wavelength_nm == kLambdaD) return glass.n_d;
  const auto [a, b] = cauchy_coefficients(glass);
  return a + b / (wavelength_nm * wavelength_nm);
}

std::string_view to_string(LensKind kind) {
  switch (kind) {
    case LensKind::DCX: return "DCX";
    case LensKind::DCV: return "DCV";
    case LensKind::PCX: return "PCX";
    case LensKind::PCV: return "PCV";
    case LensKind::Meniscus: return "meniscus";
    case LensKind::AchromatPos: return "achromat_pos";
    case LensKind::AchromatNeg: return "achromat_neg";
  }
  return "?";
}

std::optional<LensKind> parse_lens_kind(std::string_view text) {
  for (auto k : {LensKind::DCX, LensKind::DCV, LensKind::PCX, LensKind::PCV, LensKind::Meniscus,
                 LensKind::AchromatPos, LensKind::AchromatNeg})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

namespace {

double curvature_of(double r) { return r == 0.0 ? 0.0 : 1.0 / r; }

bool positive_kind(LensKind k) {
  return k == LensKind::DCX || k == LensKind::PCX || k == LensKind::AchromatPos;
}
bool negative_kind(LensKind k) {
  return k == LensKind::DCV || k == LensKind::PCV || k == LensKind::AchromatNeg;
}

}  // namespace

double LensElement::max_curvature() const {
  double m = 0.0;
  for (double r : radii) m = std::max(m, std::abs(curvature_of(r)));
  return m;
}

bool LensElement::flip_symmetric() const {
  if (radii.size() != 2) return false;
  return radii[0] == -radii[1];
}

double LensElement::total_thickness() const {
  double t = 0.0;
  for (double v : thicknesses) t += v;
  return t;
}

bool LensElement::same_optics(const LensElement& o) const {
  return kind == o.kind && diameter == o.diameter && focal_length == o.focal_length &&
         radii == o.radii && thicknesses == o.thicknesses && glasses.size() == o.glasses.size() &&
         std::equal(glasses.begin(), glasses.end(), o.glasses.begin(),
                    [](const GlassSpec& a, const GlassSpec& b) {
                      return a.n_d == b.n_d && a.v_d == b.v_d;
                    });
}

void LensElement::validate() const {
  auto fail = [&](const std::string& what) {
    throw ValidationError("element '" + stock_id + "': " + what);
  };
  if (stock_id.empty()) fail("empty stock_id");
  if (!(diameter > 0)) fail("diameter must be > 0");
  if (thicknesses.empty() || thicknesses.size() > 2) fail("expected 1 or 2 thicknesses");
  if (radii.size() != thicknesses.size() + 1) fail("radii count must equal thickness count + 1");
  if (glasses.size() != thicknesses.size()) fail("glass count must equal thickness count");
  for (double t : thicknesses)
    if (!(t > 0)) fail("thicknesses must be > 0");
  for (double r : radii)
    if (!std::isfinite(r)) fail("radius must be finite (0 encodes flat)");
  for (const auto& g : glasses) {
    if (!(g.n_d > 1.0 && g.n_d < 2.5)) fail("n_d outside (1, 2.5)");
    if (!(g.v_d > 15 && g.v_d < 100)) fail("v_d outside (15, 100)");
  }
  if (!std::isfinite(focal_length) || focal_length == 0) fail("focal length must be finite, nonzero");
  if (positive_kind(kind) && focal_length <= 0) fail("positive kind with negative focal length");
  if (negative_kind(kind) && focal_length >= 0) fail("negative kind with positive focal length");
  if ((kind == LensKind::AchromatPos || kind == LensKind::AchromatNeg) != (thicknesses.size() == 2))
    fail("achromats (and only achromats) are cemented doublets");
  if (!(cost >= 0)) fail("cost must be >= 0");
}

// ---------------------------------------------------------------------------

namespace {

bool power_less(const ElementPtr& a, const ElementPtr& b) {
  const double pa = std::abs(a->power()), pb = std::abs(b->power());
  if (pa != pb) return pa < pb;
  return a->stock_id < b->stock_id;
}

}  // namespace

Catalog::Catalog(std::vector<LensElement> elements) {
  elements_.reserve(elements.size());
  for (auto& e : elements) {
    e.validate();
    auto p = std::make_shared<const LensElement>(std::move(e));
    (p->positive() ? positive_ : negative_).push_back(p);
    elements_.push_back(std::move(p));
  }
  std::sort(positive_.begin(), positive_.end(), power_less);
  std::sort(negative_.begin(), negative_.end(), power_less);
}

ElementPtr Catalog::find(std::string_view stock_id) const {
  for (const auto& e : elements_)
    if (e->stock_id == stock_id) return e;
  return nullptr;
}

std::vector<ElementPtr> Catalog::query(double power_center, double power_tol, double diam_center,
                                       double diam_tol, PowerSign sign) const {
  const auto& list = sign == PowerSign::Positive ? positive_ : negative_;
  const double pc = std::abs(power_center);
  const double lo = pc * (1.0 - power_tol), hi = pc * (1.0 + power_tol);
  const double dlo = diam_center * (1.0 - diam_tol), dhi = diam_center * (1.0 + diam_tol);
  auto first = std::lower_bound(list.begin(), list.end(), lo, [](const ElementPtr& e, double v) {
    return std::abs(e->power()) < v;
  });
  std::vector<ElementPtr> out;
  for (auto it = first; it != list.end() && std::abs((*it)->power()) <= hi; ++it)
    if ((*it)->diameter >= dlo && (*it)->diameter <= dhi) out.push_back(*it);
  return out;
}

Catalog merge_coating_variants(std::vector<LensElement> raw) {
  std::vector<LensElement> merged;
  for (auto& e : raw) {
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const LensElement& m) { return m.same_optics(e); });
    if (it == merged.end())
      merged.push_back(std::move(e));
    else if (e.cost < it->cost)
      *it = std::move(e);
  }
  return Catalog(std::move(merged));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::array<std::string_view, 16> kColumns = {
    "stock_id", "vendor",   "kind",      "diameter_mm", "focal_length_mm", "r1_mm",
    "r2_mm",    "r3_mm",    "t1_mm",     "t2_mm",       "glass1_nd",       "glass1_vd",
    "glass2_nd", "glass2_vd", "cost",    "coating"};

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& s, std::string_view column, std::size_t row) {
  if (s.empty()) throw ParseError("missing value for " + std::string(column), row);
  if (s == "inf" || s == "+inf" || s == "-inf") return 0.0;  // flat surface
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError("not a number in " + std::string(column) + ": '" + s + "'", row);
  }
  if (used != s.size())
    throw ParseError("trailing characters in " + std::string(column) + ": '" + s + "'", row);
  return v;
}

// Shortest text that reads back to the same double.
std::string fmt_num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_radius(double r) { return r == 0.0 ? "inf" : fmt_num(r); }

}  // namespace

std::vector<LensElement> parse_catalog_csv(std::string_view text) {
  std::vector<LensElement> rows;
  std::size_t row = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++row;
    if (row == 1 && line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (nl == text.size()) break;
      continue;
    }
    auto f = split_csv_line(line);
    if (!header_seen) {
      if (f.size() != kColumns.size()) throw ParseError("header must have 16 columns", row);
      for (std::size_t i = 0; i < kColumns.size(); ++i)
        if (f[i] != kColumns[i])
          throw ParseError("header column " + std::to_string(i + 1) + " must be '" +
                               std::string(kColumns[i]) + "', got '" + f[i] + "'",
                           row);
      header_seen = true;
      continue;
    }
    if (f.size() != kColumns.size())
      throw ParseError("expected 16 fields, got " + std::to_string(f.size()), row);
    LensElement e;
    e.stock_id = f[0];
    e.vendor = f[1];
    auto kind = parse_lens_kind(f[2]);
    if (!kind) throw ParseError("unknown kind '" + f[2] + "'", row);
    e.kind = *kind;
    e.diameter = parse_number(f[3], kColumns[3], row);
    e.focal_length = parse_number(f[4], kColumns[4], row);
    const bool doublet = !f[7].empty() || !f[9].empty() || !f[12].empty() || !f[13].empty();
    e.radii = {parse_number(f[5], kColumns[5], row), parse_number(f[6], kColumns[6], row)};
    e.thicknesses = {parse_number(f[8], kColumns[8], row)};
    e.glasses = {GlassSpec{"", parse_number(f[10], kColumns[10], row),
                           parse_number(f[11], kColumns[11], row)}};
    if (doublet) {
      e.radii.push_back(parse_number(f[7], kColumns[7], row));
      e.thicknesses.push_back(parse_number(f[9], kColumns[9], row));
      e.glasses.push_back(GlassSpec{"", parse_number(f[12], kColumns[12], row),
                                    parse_number(f[13], kColumns[13], row)});
    }
    e.cost = parse_number(f[14], kColumns[14], row);
    e.coating = f[15];
    try {
      e.validate();
    } catch (const ValidationError& err) {
      throw ValidationError(err.what(), row);
    }
    rows.push_back(std::move(e));
    if (nl == text.size()) break;
  }
  if (!header_seen) throw ParseError("empty catalog file (no header)", 0);
  return rows;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open catalog file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return merge_coating_variants(parse_catalog_csv(ss.str()));
}

std::string to_catalog_csv(std::span<const LensElement> rows) {
  std::string out;
  for (std::size_t i = 0; i < kColumns.size(); ++i) {
    if (i) out += ',';
    out += kColumns[i];
  }
  out += '\n';
  for (const auto& e : rows) {
    const bool d = e.thicknesses.size() == 2;
    out += e.stock_id + ',' + e.vendor + ',' + std::string(to_string(e.kind)) + ',' +
           fmt_num(e.diameter) + ',' + fmt_num(e.focal_length) + ',' + fmt_radius(e.radii[0]) +
           ',' + fmt_radius(e.radii[1]) + ',' + (d ? fmt_radius(e.radii[2]) : "") + ',' +
           fmt_num(e.thicknesses[0]) + ',' + (d ? fmt_num(e.thicknesses[1]) : "") + ',' +
           fmt_num(e.glasses[0].n_d) + ',' + fmt_num(e.glasses[0].v_d) + ',' +
           (d ? fmt_num(e.glasses[1].n_d) : "") + ',' + (d ? fmt_num(e.glasses[1].v_d) : "") +
           ',' + fmt_num(e.cost) + ',' + e.coating + '\n';
  }
  return out;
}

std::string to_catalog_csv(const Catalog& catalog) {
  std::vector<LensElement> rows;
  for (const auto& e : catalog.elements()) rows.push_back(*e);
  return to_catalog_csv(rows);
}

double lensmaker_focal_length(double r1, double r2, double t, double n) {
  const double c1 = curvature_of(r1), c2 = curvature_of(r2);
  const double power = (n - 1.0) * (c1 - c2 + (n - 1.0) * t * c1 * c2 / n);
  return 1.0 / power;
}

// ---------------------------------------------------------------------------
// Synthetic generator

SyntheticCounts SyntheticCounts::with_totals(int positive, int negative) {
  SyntheticCounts base;
  SyntheticCounts out = base;
  auto scale = [](int part, int whole, int target) {
    return whole == 0 ? 0 : static_cast<int>(std::lround(double(part) * target / whole));
  };
  const int bp = base.positive(), bn = base.negative();
  out.dcx = scale(base.dcx, bp, positive);
  out.pcx = scale(base.pcx, bp, positive);
  out.meniscus_pos = scale(base.meniscus_pos, bp, positive);
  out.achromat_pos = positive - out.dcx - out.pcx - out.meniscus_pos;
  out.dcv = scale(base.dcv, bn, negative);
  out.pcv = scale(base.pcv, bn, negative);
  out.meniscus_neg = scale(base.meniscus_neg, bn, negative);
  out.achromat_neg = negative - out.dcv - out.pcv - out.meniscus_neg;
  out.coating_variants = scale(base.coating_variants, bp + bn, positive + negative);
  return out;
}

namespace {

struct GlassEntry {
  const char* name;
  double nd, vd;
};

constexpr GlassEntry kSingletGlasses[] = {
    {"N-BK7", 1.5168, 64.17},  {"N-BK7", 1.5168, 64.17},   {"N-BK7", 1.5168, 64.17},
    {"N-BK7", 1.5168, 64.17},  {"UVFS", 1.4585, 67.82},    {"N-SF11", 1.78472, 25.68},
    {"N-LAK22", 1.65113, 55.89}, {"N-BAF10", 1.67003, 47.11}, {"N-SK16", 1.62041, 60.32},
    {"N-F2", 1.62004, 36.37},  {"CaF2", 1.43385, 95.23},   {"N-SF5", 1.67271, 32.25},
};

constexpr std::pair<GlassEntry, GlassEntry> kAchromatPairs[] = {
    {{"N-BAF10", 1.67003, 47.11}, {"N-SF10", 1.72828, 28.53}},
    {{"N-BK7", 1.5168, 64.17}, {"N-SF5", 1.67271, 32.25}},
    {{"N-SSK8", 1.61772, 49.83}, {"N-SF10", 1.72828, 28.53}},
    {{"N-LAK22", 1.65113, 55.89}, {"N-SF6HT", 1.80518, 25.36}},
    {{"E-BAF11", 1.66672, 48.32}, {"N-SF10", 1.72828, 28.53}},
};

// Stock diameters with weights peaked below 30 mm.
constexpr std::pair<double, int> kDiameters[] = {
    {3.0, 2}, {5.0, 3},  {6.0, 5},  {6.35, 4}, {8.0, 3},  {9.0, 4},  {10.0, 6}, {12.0, 5},
    {12.7, 10}, {15.0, 4}, {18.0, 3}, {20.0, 4}, {25.0, 5}, {25.4, 8}, {30.0, 2}, {40.0, 2},
    {50.0, 1}, {50.8, 2}};

double pick_diameter(Rng& rng) {
  int total = 0;
  for (auto& d : kDiameters) total += d.second;
  auto r = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
  for (auto& d : kDiameters) {
    if (r < d.second) return d.first;
    r -= d.second;
  }
  return 12.7;
}

// Signed sag of a spherical surface at height h, measured along +z from the vertex.
double sag(double r, double h) {
  if (r == 0.0) return 0.0;
  const double c = 1.0 / r;
  return c * h * h / (1.0 + std::sqrt(std::max(0.0, 1.0 - c * c * h * h)));
}

// Paraxial EFL of a stack of glass pieces in air at the d-line, via y-nu transfer.
double stack_efl(const std::vector<double>& radii, const std::vector<double>& thick,
                 const std::vector<double>& index) {
  double y = 1.0, nu = 0.0, n = 1.0;
  for (std::size_t s = 0; s < radii.size(); ++s) {
    const double n2 = s < index.size() ? index[s] : 1.0;
    nu = nu - y * curvature_of(radii[s]) * (n2 - n);
    n = n2;
    if (s < thick.size()) y += thick[s] * nu / n;
  }
  return 1.0 / (-nu / 1.0);
}

// Center thicknesses keeping every piece's edge >= edge_min and center >= center_min.
std::vector<double> thicknesses_for(const std::vector<double>& radii, double h, double edge_min,
                                    double center_min) {
  std::vector<double> t;
  for (std::size_t i = 0; i + 1 < radii.size(); ++i) {
    const double need = edge_min + sag(radii[i], h) - sag(radii[i + 1], h);
    t.push_back(std::max(center_min, need));
  }
  return t;
}

struct Shape {
  std::vector<double> radii;
  std::vector<double> thick;
  bool ok;
};

// Scales a base radius profile so the thick-lens EFL equals f_target.
Shape solve_shape(std::vector<double> base_radii, const std::vector<double>& index, double f_target,
                  double h, double edge_min, double center_min) {
  double scale = 1.0;
  Shape s{base_radii, {}, false};
  for (int it = 0; it < 60; ++it) {
    for (std::size_t i = 0; i < base_radii.size(); ++i) s.radii[i] = base_radii[i] * scale;
    for (double r : s.radii)
      if (r != 0.0 && std::abs(r) <= h * 1.02) return s;
    s.thick = thicknesses_for(s.radii, h, edge_min, center_min);
    const double f = stack_efl(s.radii, s.thick, index);
    if (!std::isfinite(f) || f * f_target <= 0) return s;
    const double ratio = f_target / f;
    scale *= ratio;
    if (std::abs(ratio - 1.0) < 1e-13) break;
  }
  for (std::size_t i = 0; i < base_radii.size(); ++i) s.radii[i] = base_radii[i] * scale;
  for (double r : s.radii)
    if (r != 0.0 && std::abs(r) <= h * 1.05) return s;
  s.thick = thicknesses_for(s.radii, h, edge_min, center_min);
  const double f = stack_efl(s.radii, s.thick, index);
  s.ok = std::abs(f / f_target - 1.0) < 1e-9;
  return s;
}

double nice_focal(double f) {
  const double af = std::abs(f);
  const double step = af < 20 ? 0.5 : af < 100 ? 1.0 : af < 300 ? 5.0 : 10.0;
  return std::copysign(std::max(step, std::round(af / step) * step), f);
}

struct KindPlan {
  LensKind kind;
  bool positive;
  bool meniscus;
  int count;
  const char* prefix;
};

}  // namespace

std::vector<LensElement> generate_synthetic_rows(std::uint64_t seed, const SyntheticCounts& counts) {
  const KindPlan plans[] = {
      {LensKind::DCX, true, false, counts.dcx, "DCX"},
      {LensKind::PCX, true, false, counts.pcx, "PCX"},
      {LensKind::Meniscus, true, true, counts.meniscus_pos, "MPX"},
      {LensKind::AchromatPos, true, false, counts.achromat_pos, "ACH"},
      {LensKind::DCV, false, false, counts.dcv, "DCV"},
      {LensKind::PCV, false, false, counts.pcv, "PCV"},
      {LensKind::Meniscus, false, true, counts.meniscus_neg, "MNV"},
      {LensKind::AchromatNeg, false, false, counts.achromat_neg, "ACN"},
  };
  const char* vendors[] = {"SynthA", "SynthB", "SynthC", "SynthD"};

  std::vector<LensElement> rows;
  std::set<std::tuple<int, double, double, std::string>> used;
  int kind_index = 0;
  for (const auto& plan : plans) {
    Rng rng(substream_seed(seed, {static_cast<std::uint64_t>(kind_index++)}));
    int made = 0;
    int attempts = 0;
    while (made < plan.count) {
      if (++attempts > plan.count * 400 + 1000)
        throw Error("synthetic catalog: cannot place enough unique " + std::string(plan.prefix) +
                    " elements");
      const double d = pick_diameter(rng);
      const double h = d / 2.0;
      const bool achromat = plan.kind == LensKind::AchromatPos || plan.kind == LensKind::AchromatNeg;
      // f/D floor keeps curvatures manufacturable.
      double fd_min = plan.positive ? 1.2 : 1.1;
      if (achromat) fd_min = 1.6;
      if (plan.meniscus) fd_min = 2.0;
      const double fmin = std::max(4.0, fd_min * d);
      const double fmax = std::max(fmin * 1.5, std::min(500.0, 14.0 * d + 60.0));
      const double f_abs = fmin * std::pow(fmax / fmin, rng.uniform());
      const double f = nice_focal(plan.positive ? f_abs : -f_abs);

      std::vector<double> base;
      std::vector<double> index;
      std::vector<GlassSpec> glasses;
      if (achromat) {
        const auto& pair = kAchromatPairs[rng.below(std::size(kAchromatPairs))];
        const GlassEntry& g1 = plan.positive ? pair.first : pair.second;
        const GlassEntry& g2 = plan.positive ? pair.second : pair.first;
        // Thin-lens achromat split; first piece equiconvex/equiconcave.
        const double phi = 1.0 / f;
        const double phi1 = phi * g1.vd / (g1.vd - g2.vd);
        const double phi2 = phi - phi1;
        const double r1 = 2.0 * (g1.nd - 1.0) / phi1;
        const double r2 = -r1;
        const double inv_r3 = 1.0 / r2 - phi2 / (g2.nd - 1.0);
        const double r3 = std::abs(inv_r3) < 1e-6 ? 0.0 : 1.0 / inv_r3;
        base = {r1, r2, r3};
        index = {g1.nd, g2.nd};
        glasses = {{g1.name, g1.nd, g1.vd}, {g2.name, g2.nd, g2.vd}};
      } else {
        const auto& g = kSingletGlasses[rng.below(std::size(kSingletGlasses))];
        const double r0 = (g.nd - 1.0) * f;  // single refracting surface with power 1/f
        switch (plan.kind) {
          case LensKind::DCX:
          case LensKind::DCV: base = {2.0 * r0, -2.0 * r0}; break;
          case LensKind::PCX:
          case LensKind::PCV: base = {r0, 0.0}; break;
          default: {
            // Meniscus: both radii positive, bending factor q.
            const double q = 1.8 + rng.uniform();
            if (plan.positive) {
              const double r1 = r0 * (1.0 - 1.0 / q);
              base = {r1, q * r1};
            } else {
              const double r2 = r0 * (1.0 / q - 1.0);
              base = {q * r2, r2};
            }
          }
        }
        index = {g.nd};
        glasses = {{g.name, g.nd, g.vd}};
      }
      const double edge_min = std::max(0.8, 0.04 * d);
      const double center_min = plan.positive ? std::max(1.0, 0.05 * d) : std::max(1.2, 0.06 * d);
      Shape shape = solve_shape(base, index, f, h, edge_min, center_min);
      if (!shape.ok) continue;
      const auto key = std::make_tuple(static_cast<int>(plan.kind), d, f,
                                       glasses.front().name + (glasses.size() > 1 ? glasses[1].name : ""));
      if (used.count(key)) continue;
      used.insert(key);

      LensElement e;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", plan.prefix, made + 1);
      e.stock_id = id;
      e.vendor = vendors[rng.below(std::size(vendors))];
      e.kind = plan.kind;
      e.diameter = d;
      e.focal_length = f;
      e.radii = shape.radii;
      e.thicknesses = shape.thick;
      e.glasses = glasses;
      const double base_cost = achromat ? 55.0 + 2.2 * d : 18.0 + 1.4 * d;
      e.cost = std::round((base_cost * (0.85 + 0.3 * rng.uniform())) * 100.0) / 100.0;
      e.coating = "uncoated";
      rows.push_back(std::move(e));
      ++made;
    }
  }

  // Coating variants: same optics, different coating, higher price.
  Rng vr(substream_seed(seed, {0xC0A7ULL}));
  const char* coatings[] = {"VIS-AR", "NIR-AR", "MgF2"};
  const std::size_t base_count = rows.size();
  for (int i = 0; i < counts.coating_variants && base_count > 0; ++i) {
    LensElement v = rows[vr.below(base_count)];
    v.coating = coatings[vr.below(std::size(coatings))];
    v.stock_id += std::string("-") + v.coating;
    v.cost = std::round(v.cost * 1.25 * 100.0) / 100.0 + 5.0;
    rows.push_back(std::move(v));
  }
  return rows;
}

Catalog generate_synthetic_catalog(std::uint64_t seed, const SyntheticCounts& counts) {
  return merge_coating_variants(generate_synthetic_rows(seed, counts));
}

}  // namespace lf
