#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shrinktea/checkpoint.hpp"
#include "shrinktea/nets.hpp"
#include "shrinktea/rng.hpp"

namespace shrinktea {

struct DataConfig {
  std::size_t num_train_classes = 64;
  std::size_t num_test_classes = 16;
  std::size_t num_distractors = 500;  // each from its own identity
  std::size_t samples_per_class = 20;
  std::size_t latent_dim = 16;
  std::size_t hidden_dim = 64;
  double noise_sigma = 0.3;
  std::size_t image_size = 16;
  double renderer_smoothing = 0.0;  // Gaussian blur width (pixels) of each projection pattern
  std::size_t verification_pairs_per_side = 300;
  std::size_t verification_folds = 10;

  void validate() const {
    if (num_train_classes < 2) throw ConfigError("data.num_train_classes must be at least 2");
    if (num_test_classes < 2) throw ConfigError("data.num_test_classes must be at least 2");
    if (samples_per_class < 2) throw ConfigError("data.samples_per_class must be at least 2");
    if (latent_dim < 2) throw ConfigError("data.latent_dim must be at least 2");
    if (hidden_dim < 1) throw ConfigError("data.hidden_dim must be positive");
    if (image_size < 2) throw ConfigError("data.image_size must be at least 2");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("data.noise_sigma must be >= 0");
    if (!(renderer_smoothing >= 0.0) || !std::isfinite(renderer_smoothing)) {
      throw ConfigError("data.renderer_smoothing must be >= 0");
    }
    if (verification_folds < 2) throw ConfigError("data.verification_folds must be at least 2");
    if (verification_pairs_per_side == 0 || verification_pairs_per_side % verification_folds != 0) {
      throw ConfigError("data.verification_pairs_per_side must be a positive multiple of data.verification_folds");
    }
  }
};

enum class ClassRole { train, test, distractor };

// Identities are unit prototypes in a latent space; images come from a fixed random
// two-layer renderer applied to a noisy, re-normalized prototype.
struct SyntheticIdentityDataset {
  DataConfig config;
  std::uint64_t seed = 0;
  std::vector<double> images;  // N x (image_size^2), row-major h x w x 1
  std::vector<int> labels;     // class ids: train [0,T), test [T,T+E), distractors after
  std::vector<double> latents;      // N x latent_dim
  std::vector<double> prototypes;   // classes x latent_dim

  std::size_t pixels() const { return config.image_size * config.image_size; }
  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const {
    return config.num_train_classes + config.num_test_classes + config.num_distractors;
  }

  ClassRole role_of_class(int cls) const {
    if (cls < static_cast<int>(config.num_train_classes)) return ClassRole::train;
    if (cls < static_cast<int>(config.num_train_classes + config.num_test_classes)) return ClassRole::test;
    return ClassRole::distractor;
  }

  std::vector<std::size_t> indices_with_role(ClassRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (role_of_class(labels[i]) == role) out.push_back(i);
    }
    return out;
  }

  std::span<const double> image(std::size_t i) const { return {images.data() + i * pixels(), pixels()}; }
  std::span<const double> latent(std::size_t i) const {
    return {latents.data() + i * config.latent_dim, config.latent_dim};
  }

  // [B, s, s, 1] tensor of the selected images.
  Tensor batch(std::span<const std::size_t> indices) const {
    std::vector<double> values;
    values.reserve(indices.size() * pixels());
    for (auto i : indices) {
      if (i >= size()) throw IndexError("sample " + std::to_string(i) + " outside dataset");
      auto img = image(i);
      values.insert(values.end(), img.begin(), img.end());
    }
    return Tensor({indices.size(), config.image_size, config.image_size, 1}, std::move(values));
  }
};

namespace detail {

inline void normalize_in_place(std::span<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::max(std::sqrt(ss), ops::kNormEps);
  for (double& x : v) x /= n;
}

// Blurs every column of the pixels x hidden projection as an image, then restores its energy.
inline void smooth_patterns(std::vector<double>& w2, std::size_t size, std::size_t hidden, double width) {
  const int radius = static_cast<int>(std::ceil(3.0 * width));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-0.5 * k * k / (width * width));
  const int n = static_cast<int>(size);
  std::vector<double> img(size * size), tmp(size * size);
  auto pass = [&](const std::vector<double>& in, std::vector<double>& out, bool along_x) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = along_x ? y : y + k, xx = along_x ? x + k : x;
          if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
          acc += kernel[k + radius] * in[yy * n + xx];
        }
        out[y * n + x] = acc;
      }
    }
  };
  for (std::size_t j = 0; j < hidden; ++j) {
    double before = 0.0;
    for (std::size_t p = 0; p < size * size; ++p) {
      img[p] = w2[p * hidden + j];
      before += img[p] * img[p];
    }
    pass(img, tmp, true);
    pass(tmp, img, false);
    double after = 0.0;
    for (double v : img) after += v * v;
    const double gain = after > 0.0 ? std::sqrt(before / after) : 0.0;
    for (std::size_t p = 0; p < size * size; ++p) w2[p * hidden + j] = gain * img[p];
  }
}

}  // namespace detail

inline SyntheticIdentityDataset generate_dataset(const DataConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticIdentityDataset ds;
  ds.config = config;
  ds.seed = seed;
  const std::size_t dim = config.latent_dim;
  const std::size_t hidden = config.hidden_dim;
  const std::size_t pixels = ds.pixels();

  Engine proto_rng = substream(seed, "data.prototypes");
  ds.prototypes.resize(ds.num_classes() * dim);
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    std::span<double> p(ds.prototypes.data() + c * dim, dim);
    for (double& x : p) x = standard_normal(proto_rng);
    detail::normalize_in_place(p);
  }

  Engine render_rng = substream(seed, "data.renderer");
  std::vector<double> w1(hidden * dim), w2(pixels * hidden);
  for (double& x : w1) x = standard_normal(render_rng);
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& x : w2) x = w2_scale * standard_normal(render_rng);
  if (config.renderer_smoothing > 0.0) detail::smooth_patterns(w2, config.image_size, hidden, config.renderer_smoothing);

  auto render = [&](std::span<const double> z, std::span<double> img) {
    std::vector<double> h(hidden, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
      for (std::size_t k = 0; k < dim; ++k) h[j] += w1[j * dim + k] * z[k];
      h[j] = std::tanh(h[j]);
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      double v = 0.0;
      for (std::size_t j = 0; j < hidden; ++j) v += w2[p * hidden + j] * h[j];
      img[p] = v;
    }
    double mean = 0.0;
    for (double v : img) mean += v;
    mean /= static_cast<double>(pixels);
    double var = 0.0;
    for (double v : img) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(pixels));
    for (double& v : img) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  };

  Engine noise_rng = substream(seed, "data.noise");
  auto add_sample = [&](int cls) {
    std::vector<double> z(ds.prototypes.begin() + static_cast<std::ptrdiff_t>(cls * dim),
                          ds.prototypes.begin() + static_cast<std::ptrdiff_t>((cls + 1) * dim));
    if (config.noise_sigma > 0.0) {
      for (double& x : z) x += config.noise_sigma * standard_normal(noise_rng);
    }
    detail::normalize_in_place(z);
    ds.latents.insert(ds.latents.end(), z.begin(), z.end());
    ds.images.resize(ds.images.size() + pixels);
    render(z, std::span<double>(ds.images.data() + ds.images.size() - pixels, pixels));
    ds.labels.push_back(cls);
  };

  const int labelled = static_cast<int>(config.num_train_classes + config.num_test_classes);
  for (int c = 0; c < labelled; ++c) {
    for (std::size_t s = 0; s < config.samples_per_class; ++s) add_sample(c);
  }
  for (int c = labelled; c < static_cast<int>(ds.num_classes()); ++c) add_sample(c);
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset cache: "STND" | u32 version | generation params | u64 N | N*pixels f64 | N i32 labels

inline constexpr std::uint32_t kDatasetVersion = 2;

inline std::vector<std::uint8_t> serialize_dataset(const SyntheticIdentityDataset& ds) {
  detail::ByteWriter w;
  const auto& c = ds.config;
  w.bytes("STND");
  w.u32(kDatasetVersion);
  w.u64(ds.seed);
  for (std::size_t v : {c.num_train_classes, c.num_test_classes, c.num_distractors, c.samples_per_class,
                        c.latent_dim, c.hidden_dim, c.image_size}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(c.noise_sigma);
  w.f64(c.renderer_smoothing);
  w.u64(ds.size());
  for (double v : ds.images) w.f64(v);
  for (int y : ds.labels) w.u32(static_cast<std::uint32_t>(y));
  return w.take();
}

struct DatasetCacheHeader {
  std::uint64_t seed;
  DataConfig config;
  std::vector<double> images;
  std::vector<int> labels;
};

inline DatasetCacheHeader parse_dataset_cache(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4) != "STND") throw IoError("not a dataset cache (bad magic)");
  if (r.u32() != kDatasetVersion) throw IoError("unsupported dataset cache version");
  DatasetCacheHeader out;
  out.seed = r.u64();
  auto& c = out.config;
  c.num_train_classes = r.u32();
  c.num_test_classes = r.u32();
  c.num_distractors = r.u32();
  c.samples_per_class = r.u32();
  c.latent_dim = r.u32();
  c.hidden_dim = r.u32();
  c.image_size = r.u32();
  c.noise_sigma = r.f64();
  c.renderer_smoothing = r.f64();
  const std::uint64_t n = r.u64();
  out.images.resize(n * c.image_size * c.image_size);
  for (double& v : out.images) v = r.f64();
  out.labels.resize(n);
  for (int& y : out.labels) y = static_cast<int>(r.u32());
  if (!r.done()) throw IoError("trailing bytes after dataset cache");
  return out;
}

// Loads a cache and checks it against regeneration from its own parameters.
// Protocol fields of the returned config keep their defaults.
inline SyntheticIdentityDataset load_dataset_cache(const std::filesystem::path& path) {
  auto cached = parse_dataset_cache(read_file_bytes(path));
  auto ds = generate_dataset(cached.config, cached.seed);
  if (ds.images != cached.images || ds.labels != cached.labels) {
    throw IoError("dataset cache " + path.string() + " does not match regeneration from its parameters");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Protocols

struct VerificationPair {
  std::size_t a;
  std::size_t b;
  bool same;
  std::size_t fold;
};

struct VerificationProtocol {
  std::vector<VerificationPair> pairs;
  std::size_t folds = 0;
};

// Balanced positive/negative pairs over test classes. Pairs are stored fold-major; each fold
// holds an equal share of positives followed by the same number of negatives.
inline VerificationProtocol build_verification_protocol(const SyntheticIdentityDataset& ds, std::size_t pairs_per_side,
                                                        std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("verification needs at least 2 folds");
  if (pairs_per_side == 0 || pairs_per_side % folds != 0) {
    throw ConfigError("verification pairs per side must be a positive multiple of the fold count");
  }
  std::vector<std::vector<std::size_t>> by_class;
  std::vector<int> test_classes;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.role_of_class(ds.labels[i]) != ClassRole::test) continue;
    auto it = std::find(test_classes.begin(), test_classes.end(), ds.labels[i]);
    if (it == test_classes.end()) {
      test_classes.push_back(ds.labels[i]);
      by_class.emplace_back();
      it = test_classes.end() - 1;
    }
    by_class[static_cast<std::size_t>(it - test_classes.begin())].push_back(i);
  }
  std::size_t max_pos = 0, total = 0;
  for (const auto& members : by_class) {
    max_pos += members.size() * (members.size() - 1) / 2;
    total += members.size();
  }
  std::size_t same_pairs_sq = 0;
  for (const auto& members : by_class) same_pairs_sq += members.size() * members.size();
  const std::size_t max_neg = (total * total - same_pairs_sq) / 2;
  if (by_class.size() < 2 || pairs_per_side > max_pos || pairs_per_side > max_neg) {
    throw ConfigError("data.verification_pairs_per_side = " + std::to_string(pairs_per_side) +
                      " exceeds the pairs available from data.num_test_classes x data.samples_per_class");
  }

  Engine rng = substream(seed, "protocol.verification");
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::set<std::pair<std::size_t, std::size_t>> used;
  auto draw = [&](bool same) {
    while (true) {
      std::size_t ca = pick(by_class.size());
      std::size_t cb = same ? ca : pick(by_class.size());
      if (!same && ca == cb) continue;
      std::size_t a = by_class[ca][pick(by_class[ca].size())];
      std::size_t b = by_class[cb][pick(by_class[cb].size())];
      if (a == b) continue;
      auto key = std::minmax(a, b);
      if (!used.insert(key).second) continue;
      return std::pair{a, b};
    }
  };
  std::vector<std::pair<std::size_t, std::size_t>> pos, neg;
  for (std::size_t i = 0; i < pairs_per_side; ++i) pos.push_back(draw(true));
  for (std::size_t i = 0; i < pairs_per_side; ++i) neg.push_back(draw(false));

  VerificationProtocol protocol;
  protocol.folds = folds;
  const std::size_t per_fold = pairs_per_side / folds;
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t i = f * per_fold; i < (f + 1) * per_fold; ++i) protocol.pairs.push_back({pos[i].first, pos[i].second, true, f});
    for (std::size_t i = f * per_fold; i < (f + 1) * per_fold; ++i) protocol.pairs.push_back({neg[i].first, neg[i].second, false, f});
  }
  return protocol;
}

struct IdentityEntry {
  std::size_t index;
  int cls;
};

struct IdentificationProtocol {
  std::vector<IdentityEntry> gallery;  // one enrollment per test class, then distractors
  std::vector<IdentityEntry> probes;
};

inline IdentificationProtocol build_identification_protocol(const SyntheticIdentityDataset& ds, std::uint64_t seed) {
  Engine rng = substream(seed, "protocol.identification");
  IdentificationProtocol protocol;
  const int first_test = static_cast<int>(ds.config.num_train_classes);
  const int end_test = first_test + static_cast<int>(ds.config.num_test_classes);
  for (int c = first_test; c < end_test; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == c) members.push_back(i);
    }
    const std::size_t enrolled = std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k == enrolled) {
        protocol.gallery.push_back({members[k], c});
      } else {
        protocol.probes.push_back({members[k], c});
      }
    }
  }
  for (auto i : ds.indices_with_role(ClassRole::distractor)) protocol.gallery.push_back({i, ds.labels[i]});
  return protocol;
}

// ---------------------------------------------------------------------------
// Protocol files

inline void write_verification_protocol(const std::filesystem::path& path, const VerificationProtocol& protocol) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# folds " << protocol.folds << "\n";
  for (const auto& p : protocol.pairs) out << p.a << ' ' << p.b << ' ' << (p.same ? 1 : 0) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

inline VerificationProtocol read_verification_protocol(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  VerificationProtocol protocol;
  std::string line;
  std::vector<VerificationPair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream iss(line);
    if (line[0] == '#') {
      std::string hash, key;
      iss >> hash >> key >> protocol.folds;
      continue;
    }
    VerificationPair p{};
    int flag = 0;
    if (!(iss >> p.a >> p.b >> flag)) throw IoError("malformed verification line: " + line);
    p.same = flag != 0;
    pairs.push_back(p);
  }
  if (protocol.folds < 2 || pairs.size() % protocol.folds != 0) throw IoError("bad fold layout in " + path.string());
  const std::size_t per_fold = pairs.size() / protocol.folds;
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].fold = i / per_fold;
  protocol.pairs = std::move(pairs);
  return protocol;
}

inline void write_identification_protocol(const std::filesystem::path& path, const IdentificationProtocol& protocol) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& g : protocol.gallery) out << "gallery " << g.index << ' ' << g.cls << "\n";
  for (const auto& p : protocol.probes) out << "probe " << p.index << ' ' << p.cls << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

inline IdentificationProtocol read_identification_protocol(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  IdentificationProtocol protocol;
  std::string role;
  IdentityEntry e{};
  while (in >> role >> e.index >> e.cls) {
    if (role == "gallery") {
      protocol.gallery.push_back(e);
    } else if (role == "probe") {
      protocol.probes.push_back(e);
    } else {
      throw IoError("unknown identification role '" + role + "'");
    }
  }
  return protocol;
}

// ---------------------------------------------------------------------------
// Embeddings and metrics

// Unit-normalized embeddings keyed by dataset sample index.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<char> present;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t samples, std::size_t dim) : dim(dim), values(samples * dim, 0.0), present(samples, 0) {}

  void set(std::size_t index, std::span<const double> v) {
    if (index >= present.size() || v.size() != dim) throw IndexError("embedding slot " + std::to_string(index));
    std::copy(v.begin(), v.end(), values.begin() + static_cast<std::ptrdiff_t>(index * dim));
    present[index] = 1;
  }

  std::span<const double> row(std::size_t index) const {
    if (index >= present.size() || !present[index]) {
      throw IndexError("no embedding for sample " + std::to_string(index));
    }
    return {values.data() + index * dim, dim};
  }
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double c = ab / (std::max(std::sqrt(aa), ops::kNormEps) * std::max(std::sqrt(bb), ops::kNormEps));
  return std::clamp(c, -1.0, 1.0);
}

// Embeds the selected samples in eval mode and unit-normalizes each row.
inline EmbeddingTable extract_embeddings(StagedNetwork& net, const SyntheticIdentityDataset& ds,
                                         std::span<const std::size_t> indices, std::size_t batch_size = 64) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const Mode previous = net.mode();
  net.set_mode(Mode::eval);
  EmbeddingTable table(ds.size(), net.embedding_dim());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, indices.size() - start);
    auto chunk = indices.subspan(start, count);
    Tensor emb = ops::l2_normalize(net.forward(ds.batch(chunk).detach()));
    for (std::size_t r = 0; r < count; ++r) {
      table.set(chunk[r], emb.data().subspan(r * table.dim, table.dim));
    }
  }
  net.set_mode(previous);
  return table;
}

struct VerificationResult {
  double accuracy = 0.0;
  double threshold = 0.0;
};

namespace detail {

struct ScoredPair {
  double similarity;
  bool same;
};

// Predict "same" iff similarity > threshold.
inline double pair_accuracy(const std::vector<ScoredPair>& pairs, double threshold) {
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += ((p.similarity > threshold) == p.same) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// Best midpoint threshold over the training pairs; ties go to the smaller threshold.
inline double select_threshold(const std::vector<ScoredPair>& pairs) {
  std::vector<double> all, positives, negatives;
  for (const auto& p : pairs) {
    all.push_back(p.similarity);
    (p.same ? positives : negatives).push_back(p.similarity);
  }
  if (all.size() < 2) throw ContractError("threshold selection needs at least two training pairs");
  std::sort(all.begin(), all.end());
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());
  double best_threshold = 0.0;
  std::size_t best_correct = 0;
  bool have = false;
  for (std::size_t j = 0; j + 1 < all.size(); ++j) {
    const double t = (all[j] + all[j + 1]) / 2.0;
    const auto pos_above = static_cast<std::size_t>(positives.end() - std::upper_bound(positives.begin(), positives.end(), t));
    const auto neg_at_or_below = static_cast<std::size_t>(std::upper_bound(negatives.begin(), negatives.end(), t) - negatives.begin());
    const std::size_t correct = pos_above + neg_at_or_below;
    // Candidates ascend, so strict improvement keeps the smallest threshold on ties.
    if (!have || correct > best_correct) {
      best_correct = correct;
      best_threshold = t;
      have = true;
    }
  }
  return best_threshold;
}

}  // namespace detail

// k-fold cross-validated verification accuracy with cosine similarity.
inline VerificationResult verification_accuracy(const EmbeddingTable& embeddings, const VerificationProtocol& protocol) {
  if (protocol.folds < 2) throw ConfigError("verification needs at least 2 folds");
  std::vector<std::vector<detail::ScoredPair>> by_fold(protocol.folds);
  for (const auto& p : protocol.pairs) {
    if (p.fold >= protocol.folds) throw IndexError("pair fold out of range");
    by_fold[p.fold].push_back({cosine_similarity(embeddings.row(p.a), embeddings.row(p.b)), p.same});
  }
  VerificationResult result;
  for (std::size_t f = 0; f < protocol.folds; ++f) {
    std::vector<detail::ScoredPair> train;
    for (std::size_t g = 0; g < protocol.folds; ++g) {
      if (g != f) train.insert(train.end(), by_fold[g].begin(), by_fold[g].end());
    }
    const double t = detail::select_threshold(train);
    result.threshold += t;
    result.accuracy += by_fold[f].empty() ? 0.0 : detail::pair_accuracy(by_fold[f], t);
  }
  result.accuracy /= static_cast<double>(protocol.folds);
  result.threshold /= static_cast<double>(protocol.folds);
  return result;
}

// Fraction of probes whose most similar gallery entry is their own enrollment. Any other
// entry at equal or higher similarity counts as a miss.
inline double rank1_identification(const EmbeddingTable& embeddings, const IdentificationProtocol& protocol) {
  if (protocol.probes.empty()) throw ConfigError("identification protocol has no probes");
  std::size_t hits = 0;
  for (const auto& probe : protocol.probes) {
    auto q = embeddings.row(probe.index);
    double true_sim = -2.0;
    double best_other = -2.0;
    bool enrolled = false;
    for (const auto& entry : protocol.gallery) {
      const double s = cosine_similarity(q, embeddings.row(entry.index));
      if (entry.cls == probe.cls && !enrolled) {
        true_sim = s;
        enrolled = true;
      } else {
        best_other = std::max(best_other, s);
      }
    }
    if (!enrolled) throw IndexError("probe class " + std::to_string(probe.cls) + " has no gallery enrollment");
    if (true_sim > best_other) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(protocol.probes.size());
}

}  // namespace shrinktea
