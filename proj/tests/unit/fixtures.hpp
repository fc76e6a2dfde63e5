#pragma once

#include <algorithm>
#include <memory>

#include "lensfactory/catalog.hpp"
#include "lensfactory/optics.hpp"
#include "lensfactory/rng.hpp"

namespace lf::testing {

inline const Catalog& synthetic_catalog() {
  static const Catalog c = generate_synthetic_catalog(7);
  return c;
}

inline ElementPtr make_singlet(double r1, double r2, double t, double n, double v = 64.17, double diameter = 25.4,
                               const char* id = "T-1") {
  auto e = std::make_shared<LensElement>();
  e->stock_id = id;
  e->vendor = "test";
  e->diameter = diameter;
  e->radii = {r1, r2};
  e->thicknesses = {t};
  e->glasses = {{"g", n, v}};
  e->focal_length = lensmaker_focal_length(r1, r2, t, n);
  e->kind = e->focal_length > 0 ? LensKind::DCX : LensKind::DCV;
  if (r1 == 0 || r2 == 0) e->kind = e->focal_length > 0 ? LensKind::PCX : LensKind::PCV;
  e->cost = 10;
  e->coating = "uncoated";
  return e;
}

/// Random 1-4 element system from the synthetic catalog with a stop somewhere.
inline LensSystem random_system(Rng& rng, bool with_decenter = false) {
  const auto& cat = synthetic_catalog();
  const int n = 1 + static_cast<int>(rng.below(4));
  LensSystem sys;
  double min_d = 1e9;
  for (int i = 0; i < n; ++i) {
    const auto& e = cat.elements()[rng.below(cat.size())];
    sys.components.emplace_back(make_instance(e, rng.uniform() < 0.5));
    min_d = std::min(min_d, e->diameter);
  }
  const std::size_t stop_at = rng.below(static_cast<std::uint64_t>(n) + 1);
  sys.components.insert(sys.components.begin() + static_cast<long>(stop_at), Stop{0.2 * min_d});
  for (std::size_t i = 0; i + 1 < sys.components.size(); ++i) sys.gaps.push_back(rng.uniform(0.5, 6.0));
  sys.sensor_gap = rng.uniform(5.0, 40.0);
  if (with_decenter)
    for (std::size_t i = 0; i < sys.components.size(); ++i)
      sys.decenters.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)});
  return sys;
}

/// Two ideal thin lenses with a stop halfway between them.
inline LensSystem thin_lens_pair(double f1, double f2, double gap) {
  LensSystem s;
  s.components = {IdealLens{f1, 30.0}, Stop{5.0}, IdealLens{f2, 30.0}};
  s.gaps = {gap / 2, gap / 2};
  s.sensor_gap = 20;
  return s;
}

}  // namespace lf::testing
