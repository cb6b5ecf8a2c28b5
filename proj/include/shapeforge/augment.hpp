#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shapeforge/dataset_io.hpp"
#include "shapeforge/image.hpp"
#include "shapeforge/parallel.hpp"
#include "shapeforge/rng.hpp"
#include "shapeforge/synth.hpp"

namespace shapeforge {

struct AugmentConfig {
  double alpha = 4.0;
  double beta = 1.0;
  int grid = 2;
  uint64_t root_seed = 0;
  // Test hook: pin lambda instead of drawing it.
  std::optional<double> lambda_override;
};

/// Everything needed to rebuild the augmented image from the source dataset.
struct Provenance {
  uint32_t shape_src = 0;
  uint32_t texture_src = 0;
  double lambda = 0.0;
  std::vector<uint32_t> perm;
};

/// Superposed image labeled by its edge-map source.
struct AugmentedSample {
  Image image;
  int label = 0;
  Provenance prov;
};

/// Half natural, half augmented, as views into the owning pools.
struct MiniBatch {
  std::vector<std::pair<const Image*, int>> natural;
  std::vector<const AugmentedSample*> augmented;
};

namespace detail {

inline std::string augment_stream(uint64_t epoch, const char* what) {
  return "augment:" + std::to_string(epoch) + ":" + what;
}

}  // namespace detail

/// Edge maps are pure functions of the source images, so one cache serves
/// every epoch.
inline std::vector<Image> build_edge_cache(const std::vector<SynthSample>& data,
                                           int threads = 1) {
  std::vector<Image> cache(data.size());
  parallel_for(data.size(), threads,
               [&](std::size_t i) { cache[i] = edge_map(data[i].image); });
  return cache;
}

/// Augmented sample `idx` of epoch `epoch`: draw a (shape, texture) source
/// pair, a Beta(alpha, beta) weight and a patch permutation, then superpose
/// the patch-shuffled texture image over the shape source's edge map. The
/// label comes from the edge-map source.
inline AugmentedSample make_augmented(const std::vector<SynthSample>& data,
                                      uint64_t idx, uint64_t epoch,
                                      const AugmentConfig& cfg,
                                      const std::vector<Image>* edge_cache = nullptr) {
  if (data.empty()) throw EmptyPool("make_augmented: source dataset is empty");
  const uint64_t seed = cfg.root_seed;
  auto pair = sample_pairing({seed, detail::augment_stream(epoch, "pair"), idx},
                             data.size(), data.size(), 1)[0];
  double lambda =
      cfg.lambda_override
          ? *cfg.lambda_override
          : sample_lambda({seed, detail::augment_stream(epoch, "lambda"), idx},
                          {cfg.alpha, cfg.beta});
  auto perm = sample_permutation({seed, detail::augment_stream(epoch, "perm"), idx},
                                 static_cast<std::size_t>(cfg.grid) * cfg.grid);

  const Image& shape_img = data[pair.first].image;
  EdgeMap s = edge_cache ? (*edge_cache)[pair.first] : edge_map(shape_img);
  Image t = patch_shuffle(data[pair.second].image, cfg.grid, perm).image;

  AugmentedSample out;
  out.image = superpose(t, s, lambda);
  out.label = data[pair.first].shape_class;
  out.prov = {pair.first, pair.second, lambda, std::move(perm)};
  return out;
}

/// Rebuild the augmented image from stored provenance. Bit-exact with the
/// original generation.
inline Image regenerate_from_provenance(const std::vector<SynthSample>& data,
                                        const Provenance& prov) {
  int grid = 1;
  while (static_cast<std::size_t>(grid) * grid < prov.perm.size()) ++grid;
  if (static_cast<std::size_t>(grid) * grid != prov.perm.size())
    throw InvalidPermutation("provenance perm length is not a perfect square");
  EdgeMap s = edge_map(data[prov.shape_src].image);
  Image t = patch_shuffle(data[prov.texture_src].image, grid, prov.perm).image;
  return superpose(t, s, prov.lambda);
}

/// Half/half minibatch for training step `step`. Each pool is consumed in a
/// seeded shuffled order without replacement within its own epoch.
inline MiniBatch compose_batch(const std::vector<SynthSample>& natural_pool,
                               const std::vector<AugmentedSample>& augmented_pool,
                               int batch_size, uint64_t step, uint64_t seed) {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw OddBatchSize("compose_batch: batch_size must be even and >= 2, got " +
                       std::to_string(batch_size));
  if (natural_pool.empty() || augmented_pool.empty())
    throw EmptyPool("compose_batch: both pools must be nonempty");
  const std::size_t half = static_cast<std::size_t>(batch_size) / 2;
  if (natural_pool.size() < half || augmented_pool.size() < half)
    throw EmptyPool("compose_batch: pool smaller than half a batch");

  auto order = [&](const char* name, std::size_t pool, std::size_t epoch) {
    return sample_permutation(
        {seed, std::string("batch:") + name + ":" + std::to_string(epoch), 0}, pool);
  };
  MiniBatch batch;
  {
    std::size_t bpe = natural_pool.size() / half;
    auto perm = order("natural", natural_pool.size(), step / bpe);
    std::size_t base = (step % bpe) * half;
    for (std::size_t i = 0; i < half; ++i) {
      const SynthSample& s = natural_pool[perm[base + i]];
      batch.natural.emplace_back(&s.image, s.shape_class);
    }
  }
  {
    std::size_t bpe = augmented_pool.size() / half;
    auto perm = order("augmented", augmented_pool.size(), step / bpe);
    std::size_t base = (step % bpe) * half;
    for (std::size_t i = 0; i < half; ++i)
      batch.augmented.push_back(&augmented_pool[perm[base + i]]);
  }
  return batch;
}

/// Generate `n` augmented samples for one epoch in parallel. Output is
/// byte-identical for any worker count.
inline std::vector<AugmentedSample> generate_augmented_pool(
    const std::vector<SynthSample>& data, uint64_t epoch, std::size_t n,
    const AugmentConfig& cfg, const std::vector<Image>* edge_cache = nullptr,
    int threads = 1) {
  std::vector<AugmentedSample> pool(n);
  parallel_for(n, threads, [&](std::size_t i) {
    pool[i] = make_augmented(data, i, epoch, cfg, edge_cache);
  });
  return pool;
}

inline json provenance_to_json(const std::vector<AugmentedSample>& samples,
                               const AugmentConfig& cfg, uint64_t epoch) {
  json records = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Provenance& p = samples[i].prov;
    records.push_back({{"idx", i},
                       {"shape_src", p.shape_src},
                       {"texture_src", p.texture_src},
                       {"lambda", p.lambda},
                       {"perm", p.perm}});
  }
  return json{{"records", std::move(records)},
              {"config", {{"alpha", cfg.alpha},
                          {"beta", cfg.beta},
                          {"grid", cfg.grid},
                          {"seed", cfg.root_seed},
                          {"epoch", epoch}}}};
}

inline std::vector<Provenance> provenance_from_json(const json& j) {
  std::vector<Provenance> out;
  for (const auto& r : j.at("records")) {
    Provenance p;
    p.shape_src = r.at("shape_src").get<uint32_t>();
    p.texture_src = r.at("texture_src").get<uint32_t>();
    p.lambda = r.at("lambda").get<double>();
    p.perm = r.at("perm").get<std::vector<uint32_t>>();
    out.push_back(std::move(p));
  }
  return out;
}

/// Write `n` epoch-`epoch` augmented samples in the dataset binary format
/// plus a `<path>.provenance.json` sidecar. Augmented records carry the
/// inherited label as shape_class, the texture source's texture_class, and
/// an all-zero mask.
inline DatasetManifest materialize_augmented_set(const std::vector<SynthSample>& data,
                                                 uint64_t epoch, std::size_t n,
                                                 const AugmentConfig& cfg,
                                                 const std::string& out_path,
                                                 int threads = 1) {
  if (n < 1) throw ConfigError("materialize_augmented_set: n must be >= 1");
  auto pool = generate_augmented_pool(data, epoch, n, cfg, nullptr, threads);
  std::vector<SynthSample> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    records[i].image = pool[i].image;
    records[i].shape_class = pool[i].label;
    records[i].texture_class = data[pool[i].prov.texture_src].texture_class;
    records[i].mask.assign(static_cast<std::size_t>(pool[i].image.height) *
                               pool[i].image.width, 0);
  }
  DatasetManifest man;
  man.split_name = "augmented:epoch" + std::to_string(epoch);
  man.mode = "augmented";
  man.seed = cfg.root_seed;
  for (const auto& r : records) {
    man.shape_class_counts[r.shape_class]++;
    man.texture_class_counts[r.texture_class]++;
  }
  man = write_dataset(out_path, records, man);
  write_file(out_path + ".provenance.json",
             provenance_to_json(pool, cfg, epoch).dump(2) + "\n");
  return man;
}

}  // namespace shapeforge
