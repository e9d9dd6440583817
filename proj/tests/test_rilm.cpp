#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "refu/errors.hpp"
#include "refu/harness.hpp"
#include "refu/rilm.hpp"

namespace refu {
namespace {

using oracle::naive_rel;
using oracle::random_matrix;

PhaseDataset random_phase(std::size_t n, std::size_t d, std::vector<ClassId> ids,
                          std::mt19937_64& rng) {
  std::vector<ClassId> labels(n);
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  for (std::size_t i = 0; i < n; ++i) labels[i] = ids[i < ids.size() ? i : pick(rng)];
  return PhaseDataset::from_labels(random_matrix(n, d, rng), labels, std::move(ids));
}

PhaseDataset slice_phase(const PhaseDataset& p, std::size_t first, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
  return {take_rows(p.features, idx), take_rows(p.labels_onehot, idx), p.class_ids, p.space};
}

RilmState run_recursive(std::span<const PhaseDataset> phases, double eta,
                        InversePath path = InversePath::automatic) {
  RilmState s = rilm_init(phases.front(), eta);
  for (std::size_t i = 1; i < phases.size(); ++i) s = rilm_learn(s, phases[i], path);
  return s;
}

std::pair<Matrix, Matrix> stacked(std::span<const PhaseDataset> phases) {
  std::vector<Matrix> f;
  std::vector<Matrix> y;
  for (const auto& p : phases) {
    f.push_back(p.features);
    y.push_back(p.labels_onehot);
  }
  return oracle::stack_block_diagonal(f, y);
}

// correlation_stats ---------------------------------------------------------

TEST(CorrelationStats, IdentityInputs) {
  const auto s = correlation_stats(identity(2), identity(2));
  EXPECT_EQ(s.a, identity(2));
  EXPECT_EQ(s.c, identity(2));
}

TEST(CorrelationStats, EmptyPhaseGivesZeros) {
  const auto s = correlation_stats(zeros(0, 3), zeros(0, 2));
  EXPECT_EQ(s.a, zeros(3, 3));
  EXPECT_EQ(s.c, zeros(3, 2));
}

TEST(CorrelationStats, MatchesElementwiseAccumulation) {
  std::mt19937_64 rng(41);
  const Matrix f = random_matrix(6, 4, rng);
  const Matrix y = random_matrix(6, 3, rng);
  const auto s = correlation_stats(f, y);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 6; ++k) acc += f(k, i) * f(k, j);
      EXPECT_NEAR(s.a(i, j), acc, 1e-13);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 6; ++k) acc += f(k, i) * y(k, j);
      EXPECT_NEAR(s.c(i, j), acc, 1e-13);
    }
  }
  EXPECT_EQ(s.a, transpose(s.a));
}

TEST(CorrelationStats, RowMismatchIsShapeError) {
  EXPECT_THROW(correlation_stats(zeros(3, 2), zeros(4, 1)), ShapeError);
}

// rilm_init -----------------------------------------------------------------

TEST(RilmInit, IdentityData) {
  const auto p = PhaseDataset{identity(2), identity(2), {0, 1}};
  const RilmState s = rilm_init(p, 1.0);
  EXPECT_LE(relative_error(s.w_hat(), scale(identity(2), 0.5)), 1e-15);
  EXPECT_LE(relative_error(s.r(), scale(identity(2), 0.5)), 1e-15);
  EXPECT_EQ(s.phase(), 0u);
  EXPECT_EQ(s.classes_seen(), 2u);
}

TEST(RilmInit, VanishingRidgeIsLeastSquares) {
  const auto p = PhaseDataset{Matrix{{1, 0}, {0, 2}}, identity(2), {0, 1}};
  const RilmState s = rilm_init(p, 1e-12);
  EXPECT_NEAR(s.w_hat()(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(s.w_hat()(1, 1), 0.5, 1e-10);
  EXPECT_NEAR(s.w_hat()(0, 1), 0.0, 1e-12);
}

TEST(RilmInit, MatchesNormalEquationsOracle) {
  std::mt19937_64 rng(42);
  const PhaseDataset p = random_phase(40, 16, {0, 1, 2}, rng);
  const RilmState s = rilm_init(p, 0.5);
  EXPECT_LE(naive_rel(s.w_hat(), oracle::primal_ridge(p.features, p.labels_onehot, 0.5)), 1e-10);
  const Matrix gram = oracle::naive_add(
      oracle::naive_matmul(oracle::naive_transpose(p.features), p.features), oracle::naive_eye(16, 0.5));
  EXPECT_LE(naive_rel(s.r(), oracle::gauss_jordan_inverse(gram)), 1e-10);
}

TEST(RilmInit, RejectsNonPositiveEta) {
  const auto p = PhaseDataset{identity(2), identity(2), {0, 1}};
  EXPECT_THROW(rilm_init(p, 0.0), ValidationError);
  EXPECT_THROW(rilm_init(p, -1.0), ValidationError);
}

TEST(RilmState, FreshHasScaledIdentityR) {
  const RilmState s = RilmState::fresh(5, 4.0);
  EXPECT_EQ(s.r(), scale(identity(5), 0.25));
  EXPECT_EQ(s.classes_seen(), 0u);
  EXPECT_EQ(s.w_hat().rows(), 5u);
  EXPECT_EQ(s.w_hat().cols(), 0u);
}

// expand_classes ------------------------------------------------------------

TEST(ExpandClasses, ByNothingIsUnchanged) {
  std::mt19937_64 rng(43);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  const RilmState t = expand_classes(s, {});
  EXPECT_EQ(t.w_hat(), s.w_hat());
  EXPECT_EQ(t.r(), s.r());
  EXPECT_EQ(t.class_ids(), s.class_ids());
}

TEST(ExpandClasses, NewColumnsAreZero) {
  std::mt19937_64 rng(44);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  const std::vector<ClassId> extra{2, 3};
  const RilmState t = expand_classes(s, extra);
  ASSERT_EQ(t.w_hat().cols(), 4u);
  EXPECT_EQ(slice_cols(t.w_hat(), 0, 2), s.w_hat());
  EXPECT_EQ(slice_cols(t.w_hat(), 2, 2), zeros(4, 2));
  EXPECT_EQ(t.r(), s.r());
  EXPECT_EQ(t.column_of(3), 3u);
}

TEST(ExpandClasses, DuplicateIdIsProtocolError) {
  std::mt19937_64 rng(45);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  const std::vector<ClassId> dup{1};
  EXPECT_THROW(expand_classes(s, dup), ProtocolError);
  const std::vector<ClassId> twice{5, 5};
  EXPECT_THROW(expand_classes(s, twice), ProtocolError);
}

TEST(ExpandClasses, ExpandThenUpdateEqualsOracle) {
  std::mt19937_64 rng(46);
  const std::vector<PhaseDataset> phases{random_phase(30, 12, {0, 1}, rng),
                                         random_phase(25, 12, {2, 3}, rng)};
  RilmState s = rilm_init(phases[0], 1.0);
  s = rilm_update(expand_classes(s, phases[1].class_ids), phases[1]);
  const auto [f, y] = stacked(phases);
  EXPECT_LE(naive_rel(s.w_hat(), oracle::primal_ridge(f, y, 1.0)), 1e-10);
}

// update_r ------------------------------------------------------------------

TEST(UpdateR, ScalarCase) {
  const Matrix r = update_r(Matrix{{1.0}}, Matrix{{1.0}});
  EXPECT_DOUBLE_EQ(r(0, 0), 0.5);
}

TEST(UpdateR, EmptyPhaseReturnsPrevious) {
  std::mt19937_64 rng(47);
  const Matrix r0 = oracle::gauss_jordan_inverse(oracle::random_spd(6, rng));
  const Matrix sym = symmetrize(r0);
  EXPECT_EQ(update_r(sym, zeros(0, 6)), sym);
}

TEST(UpdateR, MatchesDirectForm) {
  std::mt19937_64 rng(48);
  const Matrix prev = spd_inverse(oracle::random_spd(20, rng, 2.0));
  const Matrix f = random_matrix(7, 20, rng);
  const Matrix expected = oracle::gauss_jordan_inverse(
      oracle::naive_add(oracle::gauss_jordan_inverse(prev),
                        oracle::naive_matmul(oracle::naive_transpose(f), f)));
  for (InversePath path : {InversePath::woodbury, InversePath::direct, InversePath::automatic})
    EXPECT_LE(naive_rel(update_r(prev, f, path), expected), 1e-9);
}

TEST(UpdateR, PathsAgreeWhenPhaseIsWide) {
  std::mt19937_64 rng(49);
  const Matrix prev = spd_inverse(oracle::random_spd(10, rng, 1.0));
  const Matrix f = random_matrix(30, 10, rng);  // N > d: automatic picks direct
  EXPECT_LE(relative_error(update_r(prev, f, InversePath::woodbury),
                           update_r(prev, f, InversePath::direct)),
            1e-9);
}

TEST(UpdateR, WidthMismatchIsShapeError) {
  EXPECT_THROW(update_r(identity(3), zeros(2, 4)), ShapeError);
}

// rilm_update ---------------------------------------------------------------

TEST(RilmUpdate, EmptyPhaseIsIdentityOnState) {
  std::mt19937_64 rng(50);
  const RilmState s = rilm_init(random_phase(20, 8, {0, 1, 2}, rng), 1.0);
  const PhaseDataset empty{zeros(0, 8), zeros(0, 1), {1}};
  const RilmState t = rilm_update(s, empty);
  EXPECT_EQ(t.w_hat(), s.w_hat());
  EXPECT_EQ(t.r(), s.r());
  EXPECT_EQ(t.phase(), s.phase() + 1);
}

TEST(RilmUpdate, TwoPhaseSplitMatchesBatchOracle) {
  std::mt19937_64 rng(51);
  const std::vector<PhaseDataset> phases{random_phase(60, 24, {0, 1, 2}, rng),
                                         random_phase(45, 24, {3, 4}, rng)};
  const RilmState s = run_recursive(phases, 1.0);
  EXPECT_LE(relative_error(s.w_hat(), batch_oracle(phases, 1.0)), 1e-8);
  EXPECT_EQ(s.phase(), 1u);
}

TEST(RilmUpdate, HalfSplitOfSingleFitGivesSameWeights) {
  // Two phases that share their classes: the recursion still absorbs them as
  // one joint least-squares problem once the classes are registered.
  std::mt19937_64 rng(52);
  const PhaseDataset full = random_phase(40, 16, {0, 1, 2}, rng);
  const RilmState single = rilm_init(full, 0.5);
  RilmState split = rilm_init(slice_phase(full, 0, 20), 0.5);
  split = rilm_update(split, slice_phase(full, 20, 20));
  EXPECT_LE(relative_error(split.w_hat(), single.w_hat()), 1e-10);
  EXPECT_LE(relative_error(split.r(), single.r()), 1e-10);
}

TEST(RilmUpdate, SubBatchesAreAssociative) {
  std::mt19937_64 rng(53);
  const std::vector<PhaseDataset> phases{random_phase(50, 20, {0, 1}, rng),
                                         random_phase(60, 20, {2, 3}, rng)};
  const RilmState whole = run_recursive(phases, 1.0);
  RilmState chunked = rilm_init(phases[0], 1.0);
  chunked = expand_classes(chunked, phases[1].class_ids);
  for (std::size_t first = 0; first < 60; first += 15)
    chunked = rilm_update(chunked, slice_phase(phases[1], first, 15));
  EXPECT_LE(relative_error(chunked.w_hat(), whole.w_hat()), 1e-9);
}

TEST(RilmUpdate, UnregisteredClassIsProtocolError) {
  std::mt19937_64 rng(54);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  EXPECT_THROW(rilm_update(s, random_phase(5, 4, {2}, rng)), ProtocolError);
}

TEST(RilmUpdate, WidthMismatchIsShapeError) {
  std::mt19937_64 rng(55);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  EXPECT_THROW(rilm_learn(s, random_phase(5, 5, {2}, rng)), ShapeError);
}

TEST(RilmUpdate, RawFeaturesRejected) {
  std::mt19937_64 rng(56);
  const RilmState s = rilm_init(random_phase(10, 4, {0, 1}, rng), 1.0);
  PhaseDataset raw = random_phase(5, 4, {2}, rng);
  raw.space = FeatureSpace::raw;
  EXPECT_THROW(rilm_learn(s, raw), ValidationError);
}

TEST(RilmUpdate, RStaysConsistentAndPositiveDefinite) {
  std::mt19937_64 rng(57);
  const std::size_t d = 32;
  Matrix gram = oracle::naive_eye(d, 0.1);
  RilmState s = RilmState::fresh(d, 0.1);
  for (ClassId c = 0; c < 6; ++c) {
    const PhaseDataset p = random_phase(10 + 7 * c, d, {c}, rng);
    gram = oracle::naive_add(gram,
                             oracle::naive_matmul(oracle::naive_transpose(p.features), p.features));
    s = rilm_learn(s, p);
    EXPECT_LE(oracle::naive_fro(oracle::naive_add(oracle::naive_matmul(s.r(), gram),
                                                  oracle::naive_eye(d), -1.0)),
              1e-8 * std::sqrt(static_cast<double>(d)));
    EXPECT_NO_THROW(cholesky(s.r()));
    EXPECT_EQ(s.r(), transpose(s.r()));
  }
}

// batch_oracle --------------------------------------------------------------

TEST(BatchOracle, SinglePhaseEqualsInit) {
  std::mt19937_64 rng(58);
  const std::vector<PhaseDataset> one{random_phase(30, 10, {0, 1, 2}, rng)};
  EXPECT_LE(relative_error(batch_oracle(one, 2.0), rilm_init(one[0], 2.0).w_hat()), 1e-12);
}

TEST(BatchOracle, ZeroLabelsGiveZeroWeights) {
  std::mt19937_64 rng(59);
  const std::vector<PhaseDataset> one{{random_matrix(8, 5, rng), zeros(8, 2), {0, 1}}};
  EXPECT_EQ(batch_oracle(one, 1.0), zeros(5, 2));
}

TEST(BatchOracle, FourPhasesAgreeWithRecursionAndDualForm) {
  std::mt19937_64 rng(60);
  std::vector<PhaseDataset> phases;
  for (ClassId p = 0; p < 4; ++p)
    phases.push_back(random_phase(20 + 5 * p, 48, {3 * p, 3 * p + 1, 3 * p + 2}, rng));
  const Matrix oracle_w = batch_oracle(phases, 1.0);
  const auto [f, y] = stacked(phases);
  EXPECT_LE(naive_rel(oracle_w, oracle::dual_ridge(f, y, 1.0)), 1e-10);
  EXPECT_LE(relative_error(run_recursive(phases, 1.0).w_hat(), oracle_w), 1e-8);
}

TEST(BatchOracle, OverlappingClassesIsProtocolError) {
  std::mt19937_64 rng(61);
  const std::vector<PhaseDataset> phases{random_phase(10, 4, {0, 1}, rng),
                                         random_phase(10, 4, {1, 2}, rng)};
  EXPECT_THROW(batch_oracle(phases, 1.0), ProtocolError);
}

TEST(BatchOracle, PhaseOrderInvariance) {
  std::mt19937_64 rng(62);
  std::vector<PhaseDataset> phases;
  for (ClassId p = 0; p < 3; ++p) phases.push_back(random_phase(25, 30, {2 * p, 2 * p + 1}, rng));
  const RilmState base = run_recursive(phases, 1.0);
  const Matrix reference = sort_columns_by_class(base.w_hat(), base.class_ids());
  std::vector<std::size_t> order{0, 1, 2};
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<PhaseDataset> permuted;
    for (std::size_t i : order) permuted.push_back(phases[i]);
    const RilmState s = run_recursive(permuted, 1.0);
    EXPECT_LE(relative_error(sort_columns_by_class(s.w_hat(), s.class_ids()), reference), 1e-8);
  }
}

// predict -------------------------------------------------------------------

TEST(Predict, ArgmaxOfScores) {
  const auto s = RilmState::from_parts(identity(2), identity(2), 1.0, 0, {0, 1});
  EXPECT_EQ(predict(s, Matrix{{3, 1}}), std::vector<ClassId>{0});
  EXPECT_EQ(predict(s, Matrix{{1, 3}}), std::vector<ClassId>{1});
}

TEST(Predict, TiesGoToLowestClassId) {
  const auto s = RilmState::from_parts(zeros(2, 3), identity(2), 1.0, 0, {4, 7, 9});
  EXPECT_EQ(predict(s, Matrix{{1, 2}, {-3, 0}}), (std::vector<ClassId>{4, 4}));
  // Column order does not matter for the tie-break: ids decide.
  EXPECT_EQ(predict_with(zeros(2, 3), std::vector<ClassId>{9, 2, 5}, Matrix{{1, 1}}),
            std::vector<ClassId>{2});
}

TEST(Predict, MatchesIndependentScoreOracle) {
  std::mt19937_64 rng(63);
  const Matrix w = random_matrix(6, 4, rng);
  const std::vector<ClassId> ids{10, 11, 12, 13};
  const auto s = RilmState::from_parts(w, identity(6), 1.0, 2, ids);
  const Matrix f = random_matrix(15, 6, rng);
  const Matrix scores = oracle::naive_matmul(f, w);
  const auto got = predict(s, f);
  for (std::size_t i = 0; i < 15; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 4; ++j)
      if (scores(i, j) > scores(i, best)) best = j;
    EXPECT_EQ(got[i], ids[best]);
  }
}

TEST(Predict, WidthMismatchIsShapeError) {
  const auto s = RilmState::from_parts(identity(2), identity(2), 1.0, 0, {0, 1});
  EXPECT_THROW(predict(s, zeros(1, 3)), ShapeError);
}

// kn_identity_check ---------------------------------------------------------

TEST(KnIdentity, ScalarCaseIsExact) {
  EXPECT_LE(kn_identity_check(Matrix{{1.0}}, Matrix{{1.0}}), 1e-14);
}

TEST(KnIdentity, EmptyIsZero) { EXPECT_EQ(kn_identity_check(identity(3), zeros(0, 3)), 0.0); }

TEST(KnIdentity, RandomInputs) {
  std::mt19937_64 rng(64);
  for (int t = 0; t < 5; ++t) {
    const Matrix r = spd_inverse(oracle::random_spd(16, rng));
    EXPECT_LE(kn_identity_check(r, random_matrix(9, 16, rng)), 1e-9);
  }
}

TEST(KnIdentity, ShapeMismatch) { EXPECT_THROW(kn_identity_check(identity(3), zeros(2, 4)), ShapeError); }

// checkpoint ----------------------------------------------------------------

TEST(Checkpoint, RoundTripsBitExactly) {
  std::mt19937_64 rng(65);
  const std::vector<PhaseDataset> phases{random_phase(20, 12, {0, 1}, rng),
                                         random_phase(15, 12, {3, 5}, rng)};
  const RilmState s = run_recursive(phases, 0.7);
  std::stringstream buf;
  write_checkpoint(buf, s);
  EXPECT_EQ(buf.str().rfind("RILM v1 d_rp=12 classes=4 eta=", 0), 0u);
  const RilmState back = read_checkpoint(buf);
  EXPECT_EQ(back.w_hat(), s.w_hat());
  EXPECT_EQ(back.r(), s.r());
  EXPECT_EQ(back.eta(), s.eta());
  EXPECT_EQ(back.phase(), s.phase());
  EXPECT_EQ(back.class_ids(), s.class_ids());
}

TEST(Checkpoint, SizeIndependentOfSampleCount) {
  std::size_t size = 0;
  for (std::size_t n : {5u, 50u, 400u}) {
    std::mt19937_64 rng(66);
    const std::vector<PhaseDataset> phases{random_phase(n, 16, {0, 1}, rng),
                                           random_phase(2 * n, 16, {2}, rng)};
    std::stringstream buf;
    write_checkpoint(buf, run_recursive(phases, 1.0));
    if (size == 0) size = buf.str().size();
    EXPECT_EQ(buf.str().size(), size) << "n=" << n;
  }
}

TEST(Checkpoint, RejectsBadHeader) {
  std::stringstream buf("RILM v2 d_rp=1 classes=0 eta=1 phase=0\n");
  EXPECT_THROW(read_checkpoint(buf), ParseError);
}

TEST(Checkpoint, RejectsNonPositiveDefiniteR) {
  EXPECT_THROW(RilmState::from_parts(zeros(2, 1), Matrix{{1, 0}, {0, -1}}, 1.0, 0, {0}),
               NumericalError);
}

// equivalence report --------------------------------------------------------

TEST(Equivalence, RandomProblemBothPaths) {
  const auto problem = random_cil_problem(RandomProblemSpec{}, 7);
  for (InversePath path : {InversePath::woodbury, InversePath::direct}) {
    const auto rep = verify_equivalence(problem, 1.0, path);
    EXPECT_LE(rep.weight_rel_error, 1e-8);
    EXPECT_LE(rep.max_r_residual, 1e-8);
  }
}

}  // namespace
}  // namespace refu
