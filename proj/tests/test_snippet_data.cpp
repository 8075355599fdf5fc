#include <cstring>
#include <fstream>

#include "doctest.h"
#include "gtal/snippet_data.hpp"
#include "support.hpp"

using namespace gtal;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.num_classes = 4;
  c.feature_dim = 8;
  c.videos_per_split = 6;
  c.seed = 42;
  c.prototype_seed = 5;
  return c;
}

std::vector<double> instance_durations(const Dataset& ds) {
  std::vector<double> d;
  for (const auto& v : ds.videos)
    for (const auto& g : v.instances) d.push_back(g.end - g.start);
  return d;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("generator is deterministic for a fixed config") {
  const SynthConfig c = small_config();
  CHECK(generate_synthetic_dataset(c) == generate_synthetic_dataset(c));
  SynthConfig other = c;
  other.seed = 43;
  CHECK_FALSE(generate_synthetic_dataset(c) == generate_synthetic_dataset(other));
}

TEST_CASE("generated videos satisfy the data-model invariants") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig c = small_config();
    c.seed = seed;
    c.instances_max = 5;
    const Dataset ds = generate_synthetic_dataset(c);
    CHECK_NOTHROW(validate_dataset(ds));
    for (const auto& v : ds.videos) {
      std::vector<int> derived(static_cast<std::size_t>(c.num_classes), 0);
      for (const auto& g : v.instances) {
        derived[static_cast<std::size_t>(g.class_id)] = 1;
        CHECK(g.end > g.start);
        CHECK(g.start >= 0.0);
        CHECK(g.end <= v.duration);
      }
      CHECK(derived == v.label);
      auto sorted = v.instances;
      std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.start < b.start; });
      for (std::size_t i = 1; i < sorted.size(); ++i) CHECK(sorted[i].start >= sorted[i - 1].end);
    }
  }
}

TEST_CASE("zero noise and zero blending give exact prototype plus offset") {
  SynthConfig c = small_config();
  c.noise_sigma = 0.0;
  c.boundary_blend_width = 0.0;
  c.instances_min = c.instances_max = 1;
  const Dataset ds = generate_synthetic_dataset(c);
  const DistributionBasis basis = distribution_basis(c);
  for (const auto& v : ds.videos) {
    const auto labels = snippet_labels(v);
    for (std::size_t n = 0; n < labels.size(); ++n) {
      const auto row = v.features.data.row(n);
      for (std::size_t d = 0; d < row.size(); ++d) {
        const double base = labels[n] == c.num_classes
                                ? basis.background[d]
                                : basis.class_prototypes[static_cast<std::size_t>(labels[n])][d];
        CHECK(row[d] == static_cast<double>(static_cast<float>(base + basis.offset[d])));
      }
    }
  }
}

TEST_CASE("prototypes are shared across distributions while offsets differ") {
  SynthConfig a = small_config(), b = small_config();
  b.seed = 99;
  b.distribution_id = "target";
  const auto ba = distribution_basis(a), bb = distribution_basis(b);
  CHECK(ba.class_prototypes == bb.class_prototypes);
  CHECK(ba.background == bb.background);
  CHECK(ba.offset != bb.offset);
  double norm = 0.0;
  for (double x : ba.offset) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(a.domain_offset_scale).epsilon(1e-12));
}

TEST_CASE("median instance duration tracks the configured median") {
  for (double median : {3.0, 28.5}) {
    SynthConfig c = small_config();
    c.duration_median = median;
    c.video_length_min = median < 10 ? 40.0 : 200.0;
    c.video_length_max = median < 10 ? 80.0 : 400.0;
    c.instances_min = 2;
    c.instances_max = 6;
    c.videos_per_split = 200;
    const auto durations = instance_durations(generate_synthetic_dataset(c));
    REQUIRE(durations.size() >= 500);
    CHECK(std::abs(median_of(durations) / median - 1.0) <= 0.15);
  }
}

TEST_CASE("short and long regime medians differ by about 9.5x") {
  SynthConfig s = small_config(), l = small_config();
  s.duration_median = 3.0;
  l.duration_median = 28.5;
  l.video_length_min = 200.0;
  l.video_length_max = 400.0;
  s.videos_per_split = l.videos_per_split = 200;
  s.instances_min = l.instances_min = 2;
  s.instances_max = l.instances_max = 6;
  const double ratio = duration_stats(generate_synthetic_dataset(l)).median /
                       duration_stats(generate_synthetic_dataset(s)).median;
  CHECK(ratio == doctest::Approx(9.5).epsilon(0.15));
}

TEST_CASE("duration_stats quartiles on a known set") {
  Dataset ds;
  ds.num_classes = 1;
  VideoRecord v;
  v.id = "a";
  v.duration = 100;
  v.label = {1};
  v.features = {Matrix(100, 1), 1.0};
  for (double len : {1.0, 2.0, 3.0, 4.0, 5.0}) v.instances.push_back({0, 10.0 * len, 10.0 * len + len});
  ds.videos.push_back(v);
  const DurationStats st = duration_stats(ds);
  CHECK(st.count == 5);
  CHECK(st.median == doctest::Approx(3.0));
  CHECK(st.q1 == doctest::Approx(2.0));
  CHECK(st.q3 == doctest::Approx(4.0));
  CHECK(st.mean == doctest::Approx(3.0));
}

TEST_CASE("impossible placement is rejected naming the field") {
  SynthConfig c = small_config();
  c.duration_median = 90.0;
  try {
    generate_synthetic_dataset(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("duration_median") != std::string::npos);
  }
  c = small_config();
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.instances_max = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("snippet_labels examples") {
  VideoRecord v;
  v.label = {0, 1};
  v.features = {Matrix(6, 2), 1.0};
  v.duration = 6.0;
  v.instances = {{1, 2.0, 4.0}};
  CHECK(snippet_labels(v) == std::vector<int>{2, 2, 1, 1, 2, 2});

  v.instances.clear();
  v.label = {0, 0};
  CHECK(snippet_labels(v) == std::vector<int>(6, 2));

  v.instances = {{0, 0.0, 6.0}};
  v.label = {1, 0};
  CHECK(snippet_labels(v) == std::vector<int>(6, 0));
}

TEST_CASE("snippet_labels foreground fraction matches annotated duration") {
  SynthConfig c = small_config();
  c.videos_per_split = 30;
  c.instances_max = 4;
  for (const auto& v : generate_synthetic_dataset(c).videos) {
    const auto labels = snippet_labels(v);
    const double fg = static_cast<double>(std::count_if(labels.begin(), labels.end(), [&](int l) { return l != c.num_classes; }));
    double annotated = 0.0;
    for (const auto& g : v.instances) annotated += g.end - g.start;
    CHECK(std::abs(fg * v.features.snippet_stride - annotated) <= 2.0 * v.features.snippet_stride * v.instances.size());
  }
}

TEST_CASE("dataset save and load round-trip exactly") {
  test::TempDir dir("ds_roundtrip");
  SynthConfig c = small_config();
  c.videos_per_split = 2;
  const Dataset ds = generate_synthetic_dataset(c);
  save_dataset(ds, dir.path / "d");
  CHECK(load_dataset(dir.path / "d") == ds);
}

TEST_CASE("feature file header and payload checks") {
  test::TempDir dir("feat_io");
  FeatureSequence f{Matrix(3, 4), 1.0};
  for (std::size_t i = 0; i < 12; ++i) f.data.values()[i] = 0.25 * static_cast<double>(i);
  const auto file = dir.path / "x.feat";
  write_feature_file(f, file);
  CHECK(std::filesystem::file_size(file) == 16 + 12 * 4);
  CHECK(read_feature_file(file, 1.0) == f);

  std::filesystem::resize_file(file, 16 + 11 * 4);
  try {
    read_feature_file(file, 1.0);
    FAIL("expected dimension mismatch");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
  }

  std::ofstream(dir.path / "bad.feat", std::ios::binary) << "XXXX";
  CHECK_THROWS_AS(read_feature_file(dir.path / "bad.feat", 1.0), Error);
  CHECK_THROWS_AS(read_feature_file(dir.path / "missing.feat", 1.0), Error);

  FeatureSequence g{Matrix(1, 1, 0.1), 1.0};
  CHECK_THROWS_AS(write_feature_file(g, dir.path / "y.feat"), Error);
}

TEST_CASE("corrupt manifests are reported") {
  test::TempDir dir("manifest");
  SynthConfig c = small_config();
  c.videos_per_split = 1;
  save_dataset(generate_synthetic_dataset(c), dir.path);
  std::ofstream(dir.path / "manifest.json") << "{\"format_version\": 7}";
  CHECK_THROWS_AS(load_dataset(dir.path), Error);
  std::ofstream(dir.path / "manifest.json") << "{not json";
  CHECK_THROWS_AS(load_dataset(dir.path), Error);
  CHECK_THROWS_AS(load_dataset(dir.path / "nope"), Error);
}

TEST_CASE("validate_video catches label and instance errors") {
  Rng rng(3);
  VideoRecord v = test::random_video(8, 2, 3, rng);
  v.label = {1, 0, 0};
  v.instances = {{0, 1.0, 3.0}};
  CHECK_NOTHROW(validate_video(v, 3));
  v.label = {0, 1, 0};
  CHECK_THROWS_AS(validate_video(v, 3), Error);
  v.label = {1, 0, 0};
  v.instances = {{0, 1.0, 30.0}};
  CHECK_THROWS_AS(validate_video(v, 3), Error);
  v.instances = {{0, 1.0, 3.0}};
  v.features.data(0, 0) = std::nan("");
  CHECK_THROWS_AS(validate_video(v, 3), Error);
}
