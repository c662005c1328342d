#include "deta/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "deta/error.hpp"

namespace deta {
namespace {

constexpr std::uint64_t kStreamMeans = 1;
constexpr std::uint64_t kStreamSamples = 2;
constexpr std::uint64_t kStreamInject = 3;
constexpr std::uint64_t kStreamQueryInject = 4;
constexpr std::uint64_t kStreamSupportPool = 100;

struct Geometry {
  std::vector<Feature> class_means;
  Feature background;
  std::vector<Feature> ood_means;
};

Feature gaussian_vector(int dim, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Feature v(dim);
  for (int i = 0; i < dim; ++i) v[i] = sd * normal(rng);
  return v;
}

Geometry make_geometry(const GenConfig& cfg, Rng& rng) {
  const int d = cfg.dim;
  const int c = cfg.num_classes;
  Eigen::MatrixXd raw(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) raw(i, j) = normal(rng);
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ();

  // Centred simplex: e_i - mean(e) has |.| = sqrt((C-1)/C) and pairwise
  // distance sqrt(2).
  const double scale = cfg.cluster_sep / std::sqrt(2.0);
  Feature centre = basis.leftCols(c).rowwise().mean();
  Geometry g;
  for (int k = 0; k < c; ++k) g.class_means.push_back(scale * (basis.col(k) - centre));
  const double radius = g.class_means.front().norm();

  g.background = radius * basis.col(c);
  // Unseen classes are random directions inside the span of the task classes,
  // so each one partially resembles several of them.
  for (int j = 0; j < cfg.n_ood_classes; ++j) {
    Feature dir = Feature::Zero(d);
    for (const auto& m : g.class_means) dir += std::normal_distribution<double>(0.0, 1.0)(rng) * m;
    g.ood_means.push_back(radius * dir.normalized());
  }
  return g;
}

// Background patches form a contiguous band grown from a random image edge.
std::vector<std::uint8_t> clutter_mask(const GenConfig& cfg, Rng& rng) {
  const int h = cfg.height;
  const int w = cfg.width;
  const int total = h * w;
  const int n_bg = static_cast<int>(std::lround(cfg.clutter_ratio * total));
  std::vector<std::uint8_t> mask(total, 0);
  const int edge = uniform_index(rng, 4);
  for (int i = 0; i < n_bg; ++i) {
    int r = 0;
    int col = 0;
    switch (edge) {
      case 0: r = i / w; col = i % w; break;                  // top
      case 1: r = h - 1 - i / w; col = i % w; break;          // bottom
      case 2: col = i / h; r = i % h; break;                  // left
      default: col = w - 1 - i / h; r = i % h; break;         // right
    }
    mask[static_cast<std::size_t>(r) * w + col] = 1;
  }
  return mask;
}

struct Drawn {
  PatchGrid grid;
  std::vector<std::uint8_t> mask;
  bool cluttered = false;
};

Drawn draw_sample(const GenConfig& cfg, SampleId id, const Feature& object_mean, const Geometry& geo,
                  Rng& rng) {
  Drawn out;
  out.grid = PatchGrid(id, cfg.height, cfg.width, cfg.dim);
  out.mask = clutter_mask(cfg, rng);
  const Feature object = object_mean + gaussian_vector(cfg.dim, cfg.instance_sd, rng);
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      const bool bg = out.mask[static_cast<std::size_t>(r) * cfg.width + c] != 0;
      out.grid.patch(r, c) = (bg ? geo.background : object) + gaussian_vector(cfg.dim, cfg.patch_noise_sd, rng);
      out.cluttered = out.cluttered || bg;
    }
  }
  return out;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigInvalid, what);
}

}  // namespace

void GenConfig::validate() const {
  check(num_classes >= 2, "C must be >= 2");
  check(shots >= 1, "K must be >= 1");
  check(queries_per_class >= 0, "queries_per_class must be >= 0");
  check(height >= 1 && width >= 1, "H and W must be >= 1");
  check(dim >= num_classes + 1, "d must be >= C + 1 for the class/background geometry");
  check(n_ood_classes >= 0, "n_ood_classes must be >= 0");
  check(cluster_sep >= 0.0 && patch_noise_sd >= 0.0 && instance_sd >= 0.0, "scales must be >= 0");
  check(clutter_ratio >= 0.0 && clutter_ratio <= 1.0, "clutter_ratio must lie in [0, 1]");
  check(ood_ratio >= 0.0 && ood_ratio < 1.0, "ood_ratio must lie in [0, 1)");
  check(query_ood_ratio >= 0.0 && query_ood_ratio < 1.0, "query_ood_ratio must lie in [0, 1)");
  const bool needs_ood = noise_count(ood_ratio, shots) > 0 || noise_count(query_ood_ratio, queries_per_class) > 0;
  check(!needs_ood || n_ood_classes >= 1, "OOD noise requested but n_ood_classes is 0");
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "generator config must be a JSON object");
  static const std::set<std::string> known{"C", "K", "queries_per_class", "d", "H", "W", "n_ood_classes",
                                           "cluster_sep", "patch_noise_sd", "instance_sd", "clutter_ratio",
                                           "ood_ratio", "query_ood_ratio", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::ConfigInvalid, "unknown generator key '" + key + "'");
  }
  GenConfig cfg;
  try {
    cfg.num_classes = j.value("C", cfg.num_classes);
    cfg.shots = j.value("K", cfg.shots);
    cfg.queries_per_class = j.value("queries_per_class", cfg.queries_per_class);
    cfg.dim = j.value("d", cfg.dim);
    cfg.height = j.value("H", cfg.height);
    cfg.width = j.value("W", cfg.width);
    cfg.n_ood_classes = j.value("n_ood_classes", cfg.n_ood_classes);
    cfg.cluster_sep = j.value("cluster_sep", cfg.cluster_sep);
    cfg.patch_noise_sd = j.value("patch_noise_sd", cfg.patch_noise_sd);
    cfg.instance_sd = j.value("instance_sd", cfg.instance_sd);
    cfg.clutter_ratio = j.value("clutter_ratio", cfg.clutter_ratio);
    cfg.ood_ratio = j.value("ood_ratio", cfg.ood_ratio);
    cfg.query_ood_ratio = j.value("query_ood_ratio", cfg.query_ood_ratio);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const GenConfig& cfg) {
  return {{"C", cfg.num_classes},
          {"K", cfg.shots},
          {"queries_per_class", cfg.queries_per_class},
          {"d", cfg.dim},
          {"H", cfg.height},
          {"W", cfg.width},
          {"n_ood_classes", cfg.n_ood_classes},
          {"cluster_sep", cfg.cluster_sep},
          {"patch_noise_sd", cfg.patch_noise_sd},
          {"instance_sd", cfg.instance_sd},
          {"clutter_ratio", cfg.clutter_ratio},
          {"ood_ratio", cfg.ood_ratio},
          {"query_ood_ratio", cfg.query_ood_ratio},
          {"seed", cfg.seed}};
}

int noise_count(double ratio, int count) {
  return static_cast<int>(std::floor(ratio * count + 1e-9));
}

SynthEpisode generate_episode_detailed(const GenConfig& cfg) {
  cfg.validate();
  const auto seed = static_cast<std::uint64_t>(cfg.seed);
  Rng mean_rng = make_rng(seed, kStreamMeans);
  const Geometry geo = make_geometry(cfg, mean_rng);
  Rng rng = make_rng(seed, kStreamSamples);

  SynthEpisode out;
  Episode& ep = out.episode;
  ep.dim = cfg.dim;
  ep.height = cfg.height;
  ep.width = cfg.width;
  ep.num_classes = cfg.num_classes;
  ep.shots = cfg.shots;
  ep.meta = {cfg.seed, cfg.ood_ratio, cfg.clutter_ratio};

  SampleId next_id = 0;
  auto add_id_sample = [&](std::vector<Sample>& dst, int label) {
    Drawn s = draw_sample(cfg, next_id++, geo.class_means[label - 1], geo, rng);
    out.background[s.grid.id()] = std::move(s.mask);
    dst.push_back({std::move(s.grid), label, s.cluttered ? NoiseKind::Id : NoiseKind::Clean});
  };
  for (int c = 1; c <= cfg.num_classes; ++c)
    for (int k = 0; k < cfg.shots; ++k) add_id_sample(ep.support, c);
  for (int c = 1; c <= cfg.num_classes; ++c)
    for (int q = 0; q < cfg.queries_per_class; ++q) add_id_sample(ep.query, c);

  // Each class draws its OOD replacements from its own stream, so raising
  // the ratio only appends replacements: episodes are nested across ratios.
  auto draw_ood = [&](SampleId id, Rng& src) {
    const int cls = uniform_index(src, cfg.n_ood_classes);
    Drawn s = draw_sample(cfg, id, geo.ood_means[cls], geo, src);
    out.background[s.grid.id()] = std::move(s.mask);
    return std::move(s.grid);
  };
  const int per_class_support = noise_count(cfg.ood_ratio, cfg.shots);
  const int per_class_query = noise_count(cfg.query_ood_ratio, cfg.queries_per_class);
  std::vector<PatchGrid> query_pool;
  for (int i = 0; i < per_class_query * cfg.num_classes; ++i) query_pool.push_back(draw_ood(next_id++, rng));
  std::vector<PatchGrid> support_pool;
  for (int c = 1; c <= cfg.num_classes; ++c) {
    Rng pool_rng = make_rng(seed, kStreamSupportPool + static_cast<std::uint64_t>(c));
    for (int r = 0; r < per_class_support; ++r) {
      support_pool.push_back(draw_ood(next_id + static_cast<SampleId>(c - 1) * cfg.shots + r, pool_rng));
    }
  }

  ep = inject_ood_noise(ep, cfg.ood_ratio, support_pool, seed ^ kStreamInject);

  // Query-side OOD: the same floor rule per class, but the replaced entries
  // lose their label.
  Rng qrng = make_rng(seed, kStreamQueryInject);
  std::size_t next = 0;
  for (int c = 1; c <= cfg.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ep.query.size(); ++i)
      if (ep.query[i].label == c) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), qrng);
    for (int r = 0; r < per_class_query; ++r) {
      auto& q = ep.query[idx[r]];
      q = {query_pool[next++], kOodLabel, NoiseKind::Ood};
    }
  }
  // Drop masks of samples that were replaced.
  std::set<SampleId> live;
  for (const auto& s : ep.support) live.insert(s.grid.id());
  for (const auto& s : ep.query) live.insert(s.grid.id());
  std::erase_if(out.background, [&](const auto& kv) { return !live.count(kv.first); });
  return out;
}

Episode generate_episode(const GenConfig& cfg) { return generate_episode_detailed(cfg).episode; }

Episode inject_ood_noise(const Episode& episode, double alpha, const std::vector<PatchGrid>& ood_pool,
                         std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorCode::ConfigInvalid, "alpha must lie in [0, 1)");
  const int per_class = noise_count(alpha, episode.shots);
  if (per_class == 0) return episode;
  if (ood_pool.size() < static_cast<std::size_t>(per_class) * episode.num_classes) {
    throw Error(ErrorCode::PoolExhausted, "OOD pool holds " + std::to_string(ood_pool.size()) + " samples, need " +
                                              std::to_string(per_class * episode.num_classes));
  }
  Episode out = episode;
  Rng rng = make_rng(seed, kStreamInject);
  std::size_t next = 0;
  for (int c = 1; c <= out.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.support.size(); ++i)
      if (out.support[i].label == c) idx.push_back(i);
    if (idx.size() < static_cast<std::size_t>(per_class)) {
      throw Error(ErrorCode::ConfigInvalid, "class " + std::to_string(c) + " has fewer than floor(alpha*K) samples");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int r = 0; r < per_class; ++r) {
      auto& s = out.support[idx[r]];
      s.grid = ood_pool[next++];
      s.noise = NoiseKind::Ood;
    }
  }
  return out;
}

}  // namespace deta
