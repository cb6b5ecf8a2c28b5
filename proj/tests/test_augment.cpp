#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "shapeforge/augment.hpp"

using namespace shapeforge;
namespace fs = std::filesystem;

namespace {

std::vector<SynthSample> small_dataset(std::size_t n, uint64_t seed) {
  return generate_split(SplitMode::kAligned, n, seed).second;
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("shapeforge_aug_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("augmented sample construction", "[augment]") {
  auto data = small_dataset(24, 2000);
  AugmentConfig cfg;
  cfg.root_seed = 5;

  SECTION("forced lambda 0 reduces to the bare edge map") {
    AugmentConfig pinned = cfg;
    pinned.lambda_override = 0.0;
    AugmentedSample a = make_augmented(data, 3, 0, pinned);
    REQUIRE(a.image == edge_map(data[a.prov.shape_src].image));
  }
  SECTION("forced lambda 1 is the shuffled texture with the other image's label") {
    AugmentConfig pinned = cfg;
    pinned.lambda_override = 1.0;
    AugmentedSample a = make_augmented(data, 3, 0, pinned);
    REQUIRE(a.image ==
            patch_shuffle(data[a.prov.texture_src].image, cfg.grid, a.prov.perm).image);
    REQUIRE(a.label == data[a.prov.shape_src].shape_class);
  }
  SECTION("full pipeline is bit-identical across repeated calls") {
    AugmentedSample a = make_augmented(data, 7, 2, cfg);
    AugmentedSample b = make_augmented(data, 7, 2, cfg);
    REQUIRE(a.image == b.image);
    REQUIRE(a.prov.lambda == b.prov.lambda);
    REQUIRE(a.prov.perm == b.prov.perm);
  }
  SECTION("label always comes from the edge-map source") {
    for (uint64_t i = 0; i < 50; ++i) {
      AugmentedSample a = make_augmented(data, i, 1, cfg);
      REQUIRE(a.label == data[a.prov.shape_src].shape_class);
    }
  }
  SECTION("the edge cache changes nothing") {
    auto cache = build_edge_cache(data, 2);
    for (uint64_t i = 0; i < 10; ++i)
      REQUIRE(make_augmented(data, i, 0, cfg, &cache).image ==
              make_augmented(data, i, 0, cfg).image);
  }
  SECTION("replay from provenance is bit-exact") {
    for (uint64_t i = 0; i < 25; ++i) {
      AugmentedSample a = make_augmented(data, i, 3, cfg);
      REQUIRE(regenerate_from_provenance(data, a.prov) == a.image);
    }
  }
  SECTION("epochs draw fresh pairings and weights") {
    AugmentedSample e0 = make_augmented(data, 4, 0, cfg);
    AugmentedSample e1 = make_augmented(data, 4, 1, cfg);
    REQUIRE(e0.prov.lambda != e1.prov.lambda);
  }
}

TEST_CASE("minibatch composition", "[augment]") {
  auto data = small_dataset(100, 2001);
  AugmentConfig cfg;
  cfg.root_seed = 6;
  auto pool = generate_augmented_pool(data, 0, 100, cfg);

  SECTION("smallest batch is exactly one of each") {
    MiniBatch b = compose_batch(data, pool, 2, 0, 9);
    REQUIRE(b.natural.size() == 1);
    REQUIRE(b.augmented.size() == 1);
  }
  SECTION("one epoch covers every natural sample exactly once") {
    std::map<const Image*, int> seen;
    for (uint64_t step = 0; step < 10; ++step) {
      MiniBatch b = compose_batch(data, pool, 20, step, 9);
      REQUIRE(b.natural.size() == 10);
      for (auto& [img, label] : b.natural) seen[img]++;
    }
    REQUIRE(seen.size() == 100);
    for (auto& [img, count] : seen) REQUIRE(count == 1);
  }
  SECTION("same seed and step give the same batch") {
    MiniBatch a = compose_batch(data, pool, 20, 37, 9);
    MiniBatch b = compose_batch(data, pool, 20, 37, 9);
    REQUIRE(a.natural == b.natural);
    REQUIRE(a.augmented == b.augmented);
  }
  SECTION("errors") {
    REQUIRE_THROWS_AS(compose_batch(data, pool, 21, 0, 9), OddBatchSize);
    REQUIRE_THROWS_AS(compose_batch(data, pool, 0, 0, 9), OddBatchSize);
    REQUIRE_THROWS_AS(compose_batch(data, {}, 20, 0, 9), EmptyPool);
  }
}

TEST_CASE("materialized augmented set", "[augment]") {
  auto dir = temp_dir("materialize");
  auto data = small_dataset(100, 2002);
  AugmentConfig cfg;
  cfg.root_seed = 11;

  SECTION("single record matches an independent recomputation") {
    std::string path = (dir / "one.sfds").string();
    materialize_augmented_set(data, 0, 1, cfg, path);
    auto records = read_dataset(path);
    auto prov = provenance_from_json(json::parse(read_file(path + ".provenance.json")));
    REQUIRE(records.size() == 1);
    REQUIRE(prov.size() == 1);
    Image regen = regenerate_from_provenance(data, prov[0]);
    for (std::size_t j = 0; j < regen.data.size(); ++j) {
      auto q = static_cast<float>(std::lround(255.0 * regen.data[j]) / 255.0);
      REQUIRE(std::fabs(records[0].image.data[j] - q) < 1e-6f);
    }
    REQUIRE(records[0].shape_class == data[prov[0].shape_src].shape_class);
  }
  SECTION("stored lambdas reproduce the sampler draws and follow Beta(4,1)") {
    std::string path = (dir / "big.sfds").string();
    materialize_augmented_set(data, 0, 10000, cfg, path, 4);
    auto prov = provenance_from_json(json::parse(read_file(path + ".provenance.json")));
    REQUIRE(prov.size() == 10000);
    double mean = 0;
    for (const auto& p : prov) mean += p.lambda;
    mean /= prov.size();
    REQUIRE(std::fabs(mean - 0.8) < 0.01);
    // spot-check bit-exact agreement with the pipeline draws
    for (uint64_t i : {0u, 17u, 4096u, 9999u})
      REQUIRE(make_augmented(data, i, 0, cfg).prov.lambda == prov[i].lambda);
  }
  SECTION("worker count does not change the bytes") {
    std::string p1 = (dir / "w1.sfds").string();
    std::string p2 = (dir / "w2.sfds").string();
    std::string p8 = (dir / "w8.sfds").string();
    materialize_augmented_set(data, 1, 256, cfg, p1, 1);
    materialize_augmented_set(data, 1, 256, cfg, p2, 2);
    materialize_augmented_set(data, 1, 256, cfg, p8, 8);
    REQUIRE(read_file(p1) == read_file(p2));
    REQUIRE(read_file(p1) == read_file(p8));
    REQUIRE(read_file(p1 + ".provenance.json") == read_file(p8 + ".provenance.json"));
  }
}
