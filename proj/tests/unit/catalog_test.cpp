#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "lensfactory/catalog.hpp"
#include "lensfactory/error.hpp"
#include "lensfactory/rng.hpp"

namespace lf {
namespace {

const char* kHeader =
    "stock_id,vendor,kind,diameter_mm,focal_length_mm,r1_mm,r2_mm,r3_mm,t1_mm,t2_mm,glass1_nd,glass1_vd,"
    "glass2_nd,glass2_vd,cost,coating\n";

// Thick-lens power of a stack of spherical interfaces in air, via the (y, nu) recursion.
double stack_focal_length(const LensElement& e, double wavelength) {
  double y = 1.0, nu = 0.0, n_prev = 1.0;
  for (std::size_t i = 0; i < e.radii.size(); ++i) {
    const double n_next = i < e.glasses.size() ? refractive_index(e.glasses[i], wavelength) : 1.0;
    const double c = e.radii[i] == 0 ? 0.0 : 1.0 / e.radii[i];
    nu -= y * c * (n_next - n_prev);
    if (i < e.thicknesses.size()) y += e.thicknesses[i] * nu / n_next;
    n_prev = n_next;
  }
  return -1.0 / nu;
}

TEST(Dispersion, AnchorsHoldForManyGlasses) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const GlassSpec g{"g", rng.uniform(1.4, 2.0), rng.uniform(20.0, 95.0)};
    EXPECT_NEAR(refractive_index(g, kLambdaD), g.n_d, 1e-12);
    const double dn = refractive_index(g, kLambdaF) - refractive_index(g, kLambdaC);
    EXPECT_NEAR(dn, (g.n_d - 1.0) / g.v_d, 1e-12);
  }
}

TEST(Dispersion, DLineIsExact) {
  const GlassSpec bk7{"BK7", 1.5168, 64.17};
  EXPECT_EQ(refractive_index(bk7, 587.56), 1.5168);
}

TEST(Dispersion, NormalDispersion) {
  const GlassSpec g{"bk7ish", 1.5168, 60.0};
  EXPECT_GT(refractive_index(g, 486.13), refractive_index(g, 656.27));
}

TEST(Dispersion, OutOfRangeThrows) {
  const GlassSpec g{"g", 1.5, 60};
  EXPECT_THROW(refractive_index(g, 379.0), std::out_of_range);
  EXPECT_THROW(refractive_index(g, 1100.5), std::out_of_range);
  EXPECT_NO_THROW(refractive_index(g, 380.0));
  EXPECT_NO_THROW(refractive_index(g, 1100.0));
}

TEST(CatalogCsv, ThreeRows) {
  std::string text = kHeader;
  text += "A1,thor,DCX,25.4,50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  text += "A2,thor,PCV,12.7,-30,-15.504,inf,,2,,1.5168,64.17,,,18,uncoated\n";
  text += "A3,ed,achromat_pos,25,100,61.5,-44.2,-129.0,6,2.5,1.5168,64.17,1.6727,32.21,60,VIS-AR\n";
  const auto rows = parse_catalog_csv(text);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].radii[1], 0.0);
  EXPECT_EQ(rows[2].radii.size(), 3u);
  EXPECT_EQ(rows[2].glasses.size(), 2u);
  const Catalog cat = merge_coating_variants(rows);
  EXPECT_EQ(cat.size(), 3u);
  EXPECT_EQ(cat.positive_count(), 2u);
  EXPECT_EQ(cat.negative_count(), 1u);
}

TEST(CatalogCsv, NegativeDiameterNamesRow) {
  std::string text = kHeader;
  text += "A1,thor,DCX,25.4,50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  text += "A2,thor,DCX,-5,50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  try {
    parse_catalog_csv(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(CatalogCsv, MalformedRowIsParseError) {
  std::string text = kHeader;
  text += "A1,thor,DCX,abc,50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  EXPECT_THROW(parse_catalog_csv(text), ParseError);
  EXPECT_THROW(parse_catalog_csv("stock_id,vendor\nA,B\n"), ParseError);
  std::string short_row = kHeader;
  short_row += "A1,thor,DCX\n";
  EXPECT_THROW(parse_catalog_csv(short_row), ParseError);
}

TEST(CatalogCsv, WrongSignForKindRejected) {
  std::string text = kHeader;
  text += "A1,thor,DCX,25.4,-50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  EXPECT_THROW(parse_catalog_csv(text), ValidationError);
}

TEST(CatalogCsv, RoundTripsGeneratedRows) {
  const auto rows = generate_synthetic_rows(11, SyntheticCounts::with_totals(40, 10));
  const auto back = parse_catalog_csv(to_catalog_csv(rows));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].stock_id, rows[i].stock_id);
    EXPECT_TRUE(back[i].same_optics(rows[i])) << rows[i].stock_id;
    EXPECT_EQ(back[i].cost, rows[i].cost);
  }
}

TEST(CatalogCsv, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "lf_catalog_test.csv";
  {
    std::ofstream out(path);
    out << kHeader << "A1,thor,DCX,25.4,50,51.68,-51.68,,4,,1.5168,64.17,,,20.5,uncoated\n";
  }
  EXPECT_EQ(load_catalog(path).size(), 1u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_catalog(path), Error);
}

LensElement sample_element() {
  LensElement e;
  e.stock_id = "X1";
  e.vendor = "v";
  e.kind = LensKind::DCX;
  e.diameter = 25.4;
  e.focal_length = 50;
  e.radii = {51.68, -51.68};
  e.thicknesses = {4};
  e.glasses = {{"BK7", 1.5168, 64.17}};
  e.cost = 30;
  e.coating = "uncoated";
  return e;
}

TEST(Merge, CoatingVariantsCollapseToCheapest) {
  LensElement a = sample_element();
  LensElement b = a;
  b.stock_id = "X1-AR";
  b.coating = "VIS-AR";
  b.cost = 25;
  const Catalog cat = merge_coating_variants({a, b});
  ASSERT_EQ(cat.size(), 1u);
  EXPECT_EQ(cat.elements()[0]->cost, 25);
}

TEST(Merge, DifferentRadiusKeepsBoth) {
  LensElement a = sample_element();
  LensElement b = a;
  b.stock_id = "X2";
  b.radii = {52.0, -52.0};
  EXPECT_EQ(merge_coating_variants({a, b}).size(), 2u);
}

TEST(Merge, EmptyList) { EXPECT_EQ(merge_coating_variants({}).size(), 0u); }

class SyntheticCatalog : public ::testing::Test {
 protected:
  static const Catalog& cat() {
    static const Catalog c = generate_synthetic_catalog(7);
    return c;
  }
};

TEST_F(SyntheticCatalog, DefaultTotals) {
  EXPECT_EQ(cat().positive_count(), 770u);
  EXPECT_EQ(cat().negative_count(), 115u);
  EXPECT_EQ(cat().size(), 885u);
}

TEST_F(SyntheticCatalog, Deterministic) {
  const Catalog again = generate_synthetic_catalog(7);
  ASSERT_EQ(again.size(), cat().size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again.elements()[i]->stock_id, cat().elements()[i]->stock_id);
    EXPECT_TRUE(again.elements()[i]->same_optics(*cat().elements()[i]));
  }
  EXPECT_EQ(to_catalog_csv(again), to_catalog_csv(cat()));
}

TEST_F(SyntheticCatalog, LensmakerConsistent) {
  for (const auto& e : cat().elements()) {
    const double f = stack_focal_length(*e, kLambdaD);
    EXPECT_NEAR(f, e->focal_length, 0.01 * std::abs(e->focal_length)) << e->stock_id;
  }
}

TEST_F(SyntheticCatalog, SinglesMatchClosedFormLensmaker) {
  for (const auto& e : cat().elements()) {
    if (e->radii.size() != 2) continue;
    const double n = e->glasses[0].n_d;
    const double c1 = e->radii[0] == 0 ? 0 : 1 / e->radii[0];
    const double c2 = e->radii[1] == 0 ? 0 : 1 / e->radii[1];
    const double p = (n - 1) * (c1 - c2 + (n - 1) * e->thicknesses[0] * c1 * c2 / n);
    EXPECT_NEAR(1 / p, e->focal_length, 0.01 * std::abs(e->focal_length)) << e->stock_id;
  }
}

TEST_F(SyntheticCatalog, AllInvariantsHold) {
  std::set<std::string> ids;
  for (const auto& e : cat().elements()) {
    EXPECT_NO_THROW(e->validate());
    EXPECT_TRUE(ids.insert(e->stock_id).second);
  }
  for (std::size_t i = 0; i < cat().size(); ++i)
    for (std::size_t j = i + 1; j < cat().size(); ++j)
      ASSERT_FALSE(cat().elements()[i]->same_optics(*cat().elements()[j]));
}

TEST_F(SyntheticCatalog, DiametersPeakBelow30mm) {
  std::size_t small = 0;
  for (const auto& e : cat().elements()) small += e->diameter < 30.0;
  EXPECT_GT(small, cat().size() / 2);
}

TEST_F(SyntheticCatalog, QueryMatchesLinearScan) {
  Rng rng(99);
  for (int q = 0; q < 1000; ++q) {
    const PowerSign sign = rng.uniform() < 0.5 ? PowerSign::Positive : PowerSign::Negative;
    const double pc = rng.uniform(2.0, 150.0) * (rng.uniform() < 0.5 ? 1 : -1);
    const double pt = rng.uniform(0.01, 0.99);
    const double dc = rng.uniform(5.0, 60.0);
    const double dt = rng.uniform(0.01, 0.99);
    const auto got = cat().query(pc, pt, dc, dt, sign);

    std::vector<ElementPtr> want;
    for (const auto& e : cat().elements()) {
      if ((sign == PowerSign::Positive) != e->positive()) continue;
      const double ap = std::abs(e->power());
      if (ap < std::abs(pc) * (1 - pt) || ap > std::abs(pc) * (1 + pt)) continue;
      if (e->diameter < dc * (1 - dt) || e->diameter > dc * (1 + dt)) continue;
      want.push_back(e);
    }
    std::sort(want.begin(), want.end(), [](const ElementPtr& a, const ElementPtr& b) {
      const double pa = std::abs(a->power()), pb = std::abs(b->power());
      return pa != pb ? pa < pb : a->stock_id < b->stock_id;
    });
    ASSERT_EQ(got.size(), want.size()) << "query " << q;
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], want[i]);
  }
}

TEST_F(SyntheticCatalog, ExampleQueryRange) {
  const auto got = cat().query(33.3, 0.25, 25.0, 0.99, PowerSign::Positive);
  EXPECT_FALSE(got.empty());
  for (const auto& e : got) {
    EXPECT_GE(e->power(), 33.3 * 0.75);
    EXPECT_LE(e->power(), 33.3 * 1.25);
  }
}

TEST_F(SyntheticCatalog, FullTolerancePartition) {
  double max_power = 0, max_diam = 0;
  for (const auto& e : cat().elements()) {
    max_power = std::max(max_power, std::abs(e->power()));
    max_diam = std::max(max_diam, e->diameter);
  }
  const double tol = 1.0 - 1e-9;
  const auto pos = cat().query(max_power, tol, max_diam, tol, PowerSign::Positive);
  const auto neg = cat().query(max_power, tol, max_diam, tol, PowerSign::Negative);
  std::set<std::string> ids;
  for (const auto& e : pos) ids.insert(e->stock_id);
  for (const auto& e : neg) EXPECT_TRUE(ids.insert(e->stock_id).second);
  EXPECT_EQ(ids.size(), cat().size());
}

TEST(Synthetic, CountsScaleToTotals) {
  const auto c = SyntheticCounts::with_totals(100, 20);
  EXPECT_EQ(c.positive(), 100);
  EXPECT_EQ(c.negative(), 20);
  const Catalog cat = generate_synthetic_catalog(5, c);
  EXPECT_EQ(cat.positive_count(), 100u);
  EXPECT_EQ(cat.negative_count(), 20u);
}

TEST(Synthetic, BundledFileMatchesGenerator) {
  const std::filesystem::path path = LF_DATA_DIR "/catalog_synthetic.csv";
  const Catalog cat = load_catalog(path);
  EXPECT_EQ(cat.positive_count(), 770u);
  EXPECT_EQ(cat.negative_count(), 115u);
}

}  // namespace
}  // namespace lf
