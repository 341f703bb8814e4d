#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <map>
#include <set>

#include "shrinktea/data.hpp"

using namespace shrinktea;

namespace {

DataConfig small_config() {
  DataConfig c;
  c.num_train_classes = 6;
  c.num_test_classes = 4;
  c.num_distractors = 10;
  c.samples_per_class = 5;
  c.latent_dim = 8;
  c.hidden_dim = 16;
  c.image_size = 6;
  c.verification_pairs_per_side = 10;
  c.verification_folds = 5;
  return c;
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "shrinktea_data_test";
  std::filesystem::create_directories(dir);
  return dir;
}

EmbeddingTable random_table(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  EmbeddingTable t(n, dim);
  std::normal_distribution<double> dist;
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = dist(rng);
    t.set(i, v);
  }
  return t;
}

double brute_cos(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

// Exhaustive sweep: every midpoint of every pair of distinct training similarities.
double brute_verification(const EmbeddingTable& t, const VerificationProtocol& p) {
  std::vector<double> sims;
  for (const auto& pair : p.pairs) sims.push_back(brute_cos(t.row(pair.a), t.row(pair.b)));
  double total = 0.0;
  for (std::size_t f = 0; f < p.folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < p.pairs.size(); ++i) (p.pairs[i].fold == f ? test : train).push_back(i);
    std::vector<double> candidates;
    std::vector<double> sorted;
    for (auto i : train) sorted.push_back(sims[i]);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j + 1 < sorted.size(); ++j) candidates.push_back((sorted[j] + sorted[j + 1]) / 2.0);
    double best_t = 0.0;
    long best = -1;
    for (double c : candidates) {
      long correct = 0;
      for (auto i : train) correct += ((sims[i] > c) == p.pairs[i].same) ? 1 : 0;
      if (correct > best || (correct == best && c < best_t)) {
        best = correct;
        best_t = c;
      }
    }
    long correct = 0;
    for (auto i : test) correct += ((sims[i] > best_t) == p.pairs[i].same) ? 1 : 0;
    total += static_cast<double>(correct) / static_cast<double>(test.size());
  }
  return total / static_cast<double>(p.folds);
}

double brute_rank1(const EmbeddingTable& t, const IdentificationProtocol& p) {
  std::size_t hits = 0;
  for (const auto& probe : p.probes) {
    std::vector<std::pair<double, int>> scored;
    for (const auto& g : p.gallery) scored.push_back({brute_cos(t.row(probe.index), t.row(g.index)), g.cls});
    std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
    const bool top_is_true = scored[0].second == probe.cls;
    const bool unique_top = scored.size() == 1 || scored[1].first < scored[0].first;
    hits += (top_is_true && unique_top) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(p.probes.size());
}

}  // namespace

TEST(DatasetTest, SameSeedIsBitwiseIdentical) {
  auto a = generate_dataset(small_config(), 7);
  auto b = generate_dataset(small_config(), 7);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  auto c = generate_dataset(small_config(), 8);
  EXPECT_NE(a.images, c.images);
}

TEST(DatasetTest, SmoothedRendererStaysStandardized) {
  DataConfig cfg = small_config();
  cfg.renderer_smoothing = 1.5;
  auto smooth = generate_dataset(cfg, 7);
  auto plain = generate_dataset(small_config(), 7);
  EXPECT_NE(smooth.images, plain.images);
  EXPECT_EQ(smooth.labels, plain.labels);
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    double mean = 0.0, var = 0.0;
    for (double x : smooth.image(i)) mean += x;
    mean /= static_cast<double>(smooth.pixels());
    for (double x : smooth.image(i)) var += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var / static_cast<double>(smooth.pixels()), 1.0, 1e-9);
  }
  cfg.renderer_smoothing = -1.0;
  EXPECT_THROW(generate_dataset(cfg, 7), ConfigError);
}

TEST(DatasetTest, ZeroNoiseCollapsesEachClass) {
  DataConfig cfg = small_config();
  cfg.noise_sigma = 0.0;
  auto ds = generate_dataset(cfg, 3);
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (ds.labels[i] == ds.labels[i - 1]) {
      EXPECT_TRUE(std::ranges::equal(ds.image(i), ds.image(i - 1))) << "sample " << i;
    }
  }
}

TEST(DatasetTest, ImagesAreStandardizedAndFinite) {
  auto ds = generate_dataset(small_config(), 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double mean = 0.0, sq = 0.0;
    for (double v : ds.image(i)) {
      ASSERT_TRUE(std::isfinite(v));
      mean += v;
    }
    mean /= static_cast<double>(ds.pixels());
    for (double v : ds.image(i)) sq += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / static_cast<double>(ds.pixels()), 1.0, 1e-12);
  }
}

TEST(DatasetTest, RolesAreDisjointAndCounted) {
  DataConfig cfg = small_config();
  auto ds = generate_dataset(cfg, 5);
  std::set<int> train, test, distractor;
  for (auto i : ds.indices_with_role(ClassRole::train)) train.insert(ds.labels[i]);
  for (auto i : ds.indices_with_role(ClassRole::test)) test.insert(ds.labels[i]);
  for (auto i : ds.indices_with_role(ClassRole::distractor)) distractor.insert(ds.labels[i]);
  EXPECT_EQ(train.size(), cfg.num_train_classes);
  EXPECT_EQ(test.size(), cfg.num_test_classes);
  EXPECT_EQ(distractor.size(), cfg.num_distractors);
  for (int c : test) EXPECT_FALSE(train.count(c) || distractor.count(c));
  for (int c : distractor) EXPECT_FALSE(train.count(c));
  EXPECT_EQ(ds.size(), (cfg.num_train_classes + cfg.num_test_classes) * cfg.samples_per_class + cfg.num_distractors);
}

TEST(DatasetTest, DefaultWithinClassLatentCosineExceedsBetweenClass) {
  DataConfig cfg;
  auto ds = generate_dataset(cfg, 1);
  const auto train = ds.indices_with_role(ClassRole::train);
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t x = 0; x < train.size(); x += 3) {
    for (std::size_t y = x + 1; y < train.size(); y += 2) {
      const double c = brute_cos(ds.latent(train[x]), ds.latent(train[y]));
      if (ds.labels[train[x]] == ds.labels[train[y]]) {
        within += c;
        ++nw;
      } else {
        between += c;
        ++nb;
      }
    }
  }
  ASSERT_GT(nw, 0u);
  EXPECT_GT(within / static_cast<double>(nw), between / static_cast<double>(nb));
}

TEST(DatasetTest, DegenerateParametersAreConfigErrors) {
  DataConfig cfg = small_config();
  cfg.num_test_classes = 1;
  EXPECT_THROW(generate_dataset(cfg, 1), ConfigError);
  cfg = small_config();
  cfg.samples_per_class = 1;
  EXPECT_THROW(generate_dataset(cfg, 1), ConfigError);
  cfg = small_config();
  cfg.noise_sigma = -0.1;
  EXPECT_THROW(generate_dataset(cfg, 1), ConfigError);
}

TEST(DatasetTest, CacheRoundTripAndTamperDetection) {
  auto ds = generate_dataset(small_config(), 6);
  const auto path = temp_dir() / "dataset.bin";
  write_file_bytes(path, serialize_dataset(ds));
  auto back = load_dataset_cache(path);
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
  DataConfig smoothed = small_config();
  smoothed.renderer_smoothing = 1.0;
  auto sds = generate_dataset(smoothed, 6);
  write_file_bytes(path, serialize_dataset(sds));
  EXPECT_EQ(load_dataset_cache(path).images, sds.images);
  auto bytes = serialize_dataset(ds);
  bytes[bytes.size() - 20] ^= 0x40;
  write_file_bytes(path, bytes);
  EXPECT_THROW(load_dataset_cache(path), IoError);
}

TEST(VerificationProtocolTest, DefaultSizesAndContracts) {
  DataConfig cfg;
  auto ds = generate_dataset(cfg, 2);
  auto p = build_verification_protocol(ds, 300, 10, 2);
  ASSERT_EQ(p.pairs.size(), 600u);
  std::vector<std::size_t> per_fold(10, 0), pos_per_fold(10, 0);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& pair : p.pairs) {
    ++per_fold[pair.fold];
    pos_per_fold[pair.fold] += pair.same;
    EXPECT_EQ(ds.role_of_class(ds.labels[pair.a]), ClassRole::test);
    EXPECT_EQ(ds.role_of_class(ds.labels[pair.b]), ClassRole::test);
    EXPECT_EQ(pair.same, ds.labels[pair.a] == ds.labels[pair.b]);
    EXPECT_NE(pair.a, pair.b);
    EXPECT_TRUE(seen.insert({std::min(pair.a, pair.b), std::max(pair.a, pair.b)}).second);
  }
  for (std::size_t f = 0; f < 10; ++f) {
    EXPECT_EQ(per_fold[f], 60u);
    EXPECT_EQ(pos_per_fold[f], 30u);
  }
}

TEST(VerificationProtocolTest, TooManyPairsIsConfigError) {
  auto ds = generate_dataset(small_config(), 3);
  // 4 test classes x 5 samples: 40 positive pairs at most.
  EXPECT_THROW(build_verification_protocol(ds, 50, 5, 1), ConfigError);
  EXPECT_THROW(build_verification_protocol(ds, 12, 5, 1), ConfigError);
}

TEST(VerificationProtocolTest, FileRoundTrip) {
  auto ds = generate_dataset(small_config(), 4);
  auto p = build_verification_protocol(ds, 10, 5, 9);
  const auto path = temp_dir() / "pairs.txt";
  write_verification_protocol(path, p);
  auto back = read_verification_protocol(path);
  ASSERT_EQ(back.pairs.size(), p.pairs.size());
  EXPECT_EQ(back.folds, p.folds);
  for (std::size_t i = 0; i < p.pairs.size(); ++i) {
    EXPECT_EQ(back.pairs[i].a, p.pairs[i].a);
    EXPECT_EQ(back.pairs[i].b, p.pairs[i].b);
    EXPECT_EQ(back.pairs[i].same, p.pairs[i].same);
    EXPECT_EQ(back.pairs[i].fold, p.pairs[i].fold);
  }
}

TEST(IdentificationProtocolTest, OneEnrollmentPerTestClassPlusDistractors) {
  DataConfig cfg = small_config();
  auto ds = generate_dataset(cfg, 5);
  auto p = build_identification_protocol(ds, 5);
  std::map<int, int> enrolled;
  std::size_t distractors = 0;
  for (const auto& g : p.gallery) {
    if (ds.role_of_class(g.cls) == ClassRole::test) ++enrolled[g.cls];
    else if (ds.role_of_class(g.cls) == ClassRole::distractor) ++distractors;
    else ADD_FAILURE() << "train class in gallery";
  }
  EXPECT_EQ(enrolled.size(), cfg.num_test_classes);
  for (auto [c, n] : enrolled) EXPECT_EQ(n, 1);
  EXPECT_EQ(distractors, cfg.num_distractors);
  EXPECT_EQ(p.probes.size(), cfg.num_test_classes * (cfg.samples_per_class - 1));
  for (const auto& probe : p.probes) {
    EXPECT_EQ(ds.role_of_class(probe.cls), ClassRole::test);
    for (const auto& g : p.gallery) EXPECT_NE(g.index, probe.index);
  }
  const auto path = temp_dir() / "ident.txt";
  write_identification_protocol(path, p);
  auto back = read_identification_protocol(path);
  EXPECT_EQ(back.gallery.size(), p.gallery.size());
  EXPECT_EQ(back.probes.size(), p.probes.size());
}

TEST(VerificationAccuracyTest, SeparableCaseIsPerfect) {
  EmbeddingTable t(4, 2);
  t.set(0, std::vector<double>{1, 0});
  t.set(1, std::vector<double>{1, 0});
  t.set(2, std::vector<double>{-1, 0});
  t.set(3, std::vector<double>{1, 0});
  VerificationProtocol p;
  p.folds = 2;
  p.pairs = {{0, 1, true, 0}, {0, 2, false, 0}, {3, 1, true, 1}, {3, 2, false, 1}};
  EXPECT_DOUBLE_EQ(verification_accuracy(t, p).accuracy, 1.0);
}

TEST(VerificationAccuracyTest, IdenticalEmbeddingsGiveHalf) {
  EmbeddingTable t(6, 3);
  for (std::size_t i = 0; i < 6; ++i) t.set(i, std::vector<double>{0.2, 0.3, 0.4});
  VerificationProtocol p;
  p.folds = 2;
  p.pairs = {{0, 1, true, 0}, {2, 3, false, 0}, {4, 5, true, 1}, {1, 2, false, 1}};
  EXPECT_DOUBLE_EQ(verification_accuracy(t, p).accuracy, 0.5);
}

TEST(VerificationAccuracyTest, MissingEmbeddingIsIndexError) {
  EmbeddingTable t(3, 2);
  t.set(0, std::vector<double>{1, 0});
  VerificationProtocol p;
  p.folds = 2;
  p.pairs = {{0, 1, true, 0}, {0, 2, false, 1}};
  EXPECT_THROW(verification_accuracy(t, p), IndexError);
}

TEST(VerificationAccuracyTest, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 30;
    EmbeddingTable t = random_table(n, 3, rng);
    VerificationProtocol p;
    p.folds = 5;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t pairs = 20 + seed % 30;  // with the duplicate below, at most 50
    for (std::size_t i = 0; i < pairs; ++i) {
      p.pairs.push_back({pick(rng), pick(rng), static_cast<bool>(rng() & 1), i % p.folds});
    }
    // Duplicate similarities exercise the tie rule.
    p.pairs.push_back(p.pairs[0]);
    p.pairs.back().fold = 1;
    EXPECT_EQ(verification_accuracy(t, p).accuracy, brute_verification(t, p)) << "seed " << seed;
  }
}

TEST(Rank1Test, ExactMatchWithOrthogonalDistractors) {
  EmbeddingTable t(4, 3);
  t.set(0, std::vector<double>{1, 0, 0});  // enrollment
  t.set(1, std::vector<double>{0, 1, 0});  // distractor
  t.set(2, std::vector<double>{0, 0, 1});  // distractor
  t.set(3, std::vector<double>{1, 0, 0});  // probe
  IdentificationProtocol p{{{0, 5}, {1, 9}, {2, 10}}, {{3, 5}}};
  EXPECT_DOUBLE_EQ(rank1_identification(t, p), 1.0);
}

TEST(Rank1Test, TiesCountAsFailure) {
  EmbeddingTable t(4, 2);
  for (std::size_t i = 0; i < 4; ++i) t.set(i, std::vector<double>{0.6, 0.8});
  IdentificationProtocol p{{{0, 1}, {1, 2}}, {{2, 1}, {3, 2}}};
  EXPECT_DOUBLE_EQ(rank1_identification(t, p), 0.0);
}

TEST(Rank1Test, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const std::size_t classes = 5, distractors = 10, probes_per = 3;
    const std::size_t n = classes * (probes_per + 1) + distractors;
    EmbeddingTable t = random_table(n, 4, rng);
    IdentificationProtocol p;
    std::size_t next = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      p.gallery.push_back({next++, static_cast<int>(c)});
      for (std::size_t k = 0; k < probes_per; ++k) p.probes.push_back({next++, static_cast<int>(c)});
    }
    for (std::size_t d = 0; d < distractors; ++d) p.gallery.push_back({next++, static_cast<int>(100 + d)});
    EXPECT_EQ(rank1_identification(t, p), brute_rank1(t, p)) << "seed " << seed;
  }
}

TEST(ExtractEmbeddingsTest, UnitNormDeterministicAndBatchIndependent) {
  DataConfig cfg = small_config();
  cfg.image_size = 8;
  auto ds = generate_dataset(cfg, 11);
  Engine rng(3);
  StagedNetwork net({8, 8, 1}, {4, 8}, 1, 6, rng);
  net.set_mode(Mode::train);
  // Give BN non-trivial running statistics first.
  std::vector<std::size_t> warm{0, 1, 2, 3, 4, 5, 6, 7};
  net.forward(ds.batch(warm));
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto a = extract_embeddings(net, ds, all, 32);
  auto b = extract_embeddings(net, ds, all, 1);
  auto c = extract_embeddings(net, ds, all, 32);
  EXPECT_EQ(net.mode(), Mode::train);
  EXPECT_EQ(a.values, c.values);
  for (std::size_t i = 0; i < all.size(); ++i) {
    double n = 0.0;
    for (double v : a.row(i)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-10);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(a.row(i)[k], b.row(i)[k], 1e-9);
  }
}
