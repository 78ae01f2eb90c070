#include <gtest/gtest.h>

#include "mscod/check.hpp"
#include "mscod/errors.hpp"
#include "mscod/metrics.hpp"
#include "test_util.hpp"

using namespace mscod;

namespace {

std::vector<Vec3> random_points(Rng& rng, std::size_t n) {
  std::vector<Vec3> p(n);
  for (auto& v : p)
    for (auto& c : v) c = 2 * rng.normal();
  return p;
}

Vec3 rotate(const check::Mat3& r, const Vec3& p) {
  return {r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2], r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
          r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2]};
}

Complex pocket_with_ligand(std::vector<Vec3> protein, std::vector<Vec3> ligand) {
  Complex c;
  c.name = "m";
  c.protein_types = 1;
  c.ligand_types = 2;
  c.protein_type.assign(protein.size(), 0);
  c.ligand_type.assign(ligand.size(), 0);
  c.protein_pos = std::move(protein);
  c.ligand_pos = std::move(ligand);
  return c;
}

}  // namespace

TEST(Metrics, RmsdExamples) {
  Rng rng(1);
  const auto a = random_points(rng, 6);
  EXPECT_EQ(rmsd(a, a), 0.0);
  auto shifted = a;
  for (auto& p : shifted) p[0] += 1.0;
  EXPECT_NEAR(rmsd(a, shifted), 1.0, 1e-12);
  const auto b = random_points(rng, 6);
  double acc = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (int k = 0; k < 3; ++k) acc += (a[i][k] - b[i][k]) * (a[i][k] - b[i][k]);
  EXPECT_NEAR(rmsd(a, b), std::sqrt(acc / 6), 1e-12);
  EXPECT_THROW(rmsd(a, random_points(rng, 5)), DimensionError);
}

TEST(Metrics, RmsdSymmetricAndRotationInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_points(rng, 5), b = random_points(rng, 5);
    EXPECT_EQ(rmsd(a, b), rmsd(b, a));
    const auto r = check::random_rotation(rng);
    const double before = rmsd(a, b);
    for (auto& p : a) p = rotate(r, p);
    for (auto& p : b) p = rotate(r, p);
    EXPECT_NEAR(rmsd(a, b), before, 1e-12);
  }
}

TEST(Metrics, ClashExamples) {
  EXPECT_EQ(clash_count(pocket_with_ligand({{0, 0, 0}}, {{1, 0, 0}}), 2.0), 1u);
  EXPECT_EQ(clash_count(pocket_with_ligand({{0, 0, 0}}, {{2, 0, 0}, {0, 3, 0}}), 2.0), 0u);
  EXPECT_THROW(clash_count(pocket_with_ligand({{0, 0, 0}}, {{2, 0, 0}}), 0.0), ConfigError);
}

TEST(Metrics, ClashMatchesPairScanAndIsRigidInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Complex c = pocket_with_ligand(random_points(rng, 15), random_points(rng, 6));
    std::size_t oracle = 0;
    for (const auto& l : c.ligand_pos)
      for (const auto& p : c.protein_pos) {
        const double dx = l[0] - p[0], dy = l[1] - p[1], dz = l[2] - p[2];
        oracle += dx * dx + dy * dy + dz * dz < 4.0;
      }
    EXPECT_EQ(clash_count(c, 2.0), oracle);
    const auto r = check::random_rotation(rng);
    Complex moved = c;
    for (auto& p : moved.protein_pos) p = rotate(r, p), p[0] += 3;
    for (auto& p : moved.ligand_pos) p = rotate(r, p), p[0] += 3;
    EXPECT_EQ(clash_count(moved, 2.0), oracle);
  }
}

TEST(Metrics, PassRateExamples) {
  Rng rng(4);
  const auto a = random_points(rng, 4);
  auto far = a;
  for (auto& p : far) p[1] += 5;
  EXPECT_EQ(rmsd_pass_rate({a, a}, {a, a}), 1.0);
  EXPECT_EQ(rmsd_pass_rate({a, far, a, far}, {a, a, a, a}), 0.5);
  try {
    rmsd_pass_rate({}, {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "no samples");
  }
  EXPECT_THROW(rmsd_pass_rate({a}, {a, a}), DimensionError);
}

TEST(Metrics, ReportRowsAndAggregates) {
  const Complex ref = pocket_with_ligand({{0, 0, 0}}, {{3, 0, 0}, {0, 3, 0}});
  Complex same = ref, clashing = ref;
  same.name = "same";
  clashing.name = "clash";
  clashing.ligand_pos[0] = {1, 0, 0};
  clashing.ligand_type[1] = 1;
  const auto rep = evaluate_samples({same, clashing}, ref);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].rmsd, 0.0);
  EXPECT_EQ(rep.rows[1].clashes, 1u);
  EXPECT_EQ(rep.rows[1].type_accuracy, 0.5);
  EXPECT_EQ(rep.rmsd_pass_rate, 1.0);
  EXPECT_EQ(rep.clash_free_rate, 0.5);
  const std::string text = format_report(rep);
  EXPECT_EQ(text.rfind("sample\trmsd\tclashes\ttype_acc\trmsd_pass\tclash_free\n", 0), 0u);
  EXPECT_NE(text.find("\nsame\t"), std::string::npos);
  EXPECT_NE(text.find("# "), std::string::npos);
  EXPECT_THROW(evaluate_samples({}, ref), ConfigError);
}
