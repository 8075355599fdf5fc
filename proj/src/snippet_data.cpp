#include "gtal/snippet_data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace gtal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train or test)");
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("SynthConfig." + field + ": " + why);
  };
  if (num_classes < 1) fail("num_classes", "must be >= 1");
  if (feature_dim < 1) fail("feature_dim", "must be >= 1");
  if (videos_per_split < 1) fail("videos_per_split", "must be >= 1");
  if (!(duration_median > 0.0)) fail("duration_median", "must be > 0");
  if (!(duration_log_sigma >= 0.0)) fail("duration_log_sigma", "must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma", "must be >= 0");
  if (!(domain_offset_scale >= 0.0)) fail("domain_offset_scale", "must be >= 0");
  if (!(boundary_blend_width >= 0.0)) fail("boundary_blend_width", "must be >= 0");
  if (!(snippet_stride > 0.0)) fail("snippet_stride", "must be > 0");
  if (!(video_length_min > 0.0) || video_length_max < video_length_min)
    fail("video_length_range", "must satisfy 0 < min <= max");
  if (instances_min < 1 || instances_max < instances_min)
    fail("instances_per_video_range", "must satisfy 1 <= min <= max");
  if (duration_median >= video_length_max)
    fail("duration_median", "instance placement impossible: duration_median (" +
                                std::to_string(duration_median) + " s) >= video length (" +
                                std::to_string(video_length_max) + " s)");
}

namespace {

std::vector<double> random_direction(Rng& rng, int dim, double norm) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = gauss(rng);
    sq += x * x;
  }
  const double scale = sq > 0.0 ? norm / std::sqrt(sq) : 0.0;
  for (double& x : v) x *= scale;
  return v;
}

std::vector<GroundTruthInstance> place_instances(const SynthConfig& cfg, double duration, Rng& rng) {
  std::uniform_int_distribution<int> count_dist(cfg.instances_min, cfg.instances_max);
  std::uniform_int_distribution<int> class_dist(0, cfg.num_classes - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int wanted = count_dist(rng);
  std::vector<GroundTruthInstance> out;
  const int max_attempts = 200 * wanted;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < wanted; ++attempt) {
    const double d = cfg.duration_median * std::exp(cfg.duration_log_sigma * gauss(rng));
    if (d >= duration) continue;
    const double start = unit(rng) * (duration - d);
    const GroundTruthInstance cand{class_dist(rng), start, start + d};
    const bool overlaps = std::any_of(out.begin(), out.end(), [&](const GroundTruthInstance& g) {
      return cand.start < g.end && g.start < cand.end;
    });
    if (!overlaps) out.push_back(cand);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return out;
}

// Foreground weight of a snippet centred at t for one instance.
double blend_weight(const GroundTruthInstance& g, double t, double stride, double width) {
  const bool inside = t >= g.start && t < g.end;
  if (width <= 0.0) return inside ? 1.0 : 0.0;
  const double signed_dist = std::min(t - g.start, g.end - t) / stride;
  return std::clamp(0.5 + signed_dist / (2.0 * width), 0.0, 1.0);
}

}  // namespace

DistributionBasis distribution_basis(const SynthConfig& cfg) {
  DistributionBasis b;
  Rng proto_rng(substream_seed(cfg.prototype_seed, "prototypes"));
  for (int c = 0; c < cfg.num_classes; ++c) b.class_prototypes.push_back(random_direction(proto_rng, cfg.feature_dim, 1.0));
  b.background = random_direction(proto_rng, cfg.feature_dim, 1.0);
  Rng offset_rng(substream_seed(cfg.seed, "offset"));
  b.offset = random_direction(offset_rng, cfg.feature_dim, cfg.domain_offset_scale);
  return b;
}

Dataset generate_synthetic_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const DistributionBasis basis = distribution_basis(cfg);
  const std::uint64_t split_seed = substream_seed(cfg.seed, to_string(cfg.split));
  const int D = cfg.feature_dim;

  Dataset ds;
  ds.distribution_id = cfg.distribution_id;
  ds.split = cfg.split;
  ds.num_classes = cfg.num_classes;
  ds.videos.reserve(cfg.videos_per_split);

  for (int v = 0; v < cfg.videos_per_split; ++v) {
    Rng rng(substream_seed(split_seed, static_cast<std::uint64_t>(v)));
    std::uniform_real_distribution<double> len_dist(cfg.video_length_min, cfg.video_length_max);
    const double len = len_dist(rng);
    const auto N = static_cast<std::size_t>(std::max(1.0, std::round(len / cfg.snippet_stride)));
    const double duration = static_cast<double>(N) * cfg.snippet_stride;

    VideoRecord rec;
    rec.id = cfg.distribution_id + "_" + to_string(cfg.split) + "_" + std::to_string(v);
    rec.duration = duration;
    rec.instances = place_instances(cfg, duration, rng);
    for (int retry = 0; rec.instances.empty() && retry < 50; ++retry) rec.instances = place_instances(cfg, duration, rng);
    if (rec.instances.empty())
      throw Error("generate_synthetic_dataset: could not place any instance in video " + rec.id +
                  " (check duration_median against video_length_range)");
    rec.label.assign(cfg.num_classes, 0);
    for (const auto& g : rec.instances) rec.label[g.class_id] = 1;

    rec.features.snippet_stride = cfg.snippet_stride;
    rec.features.data = Matrix(N, D);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t n = 0; n < N; ++n) {
      const double t = (static_cast<double>(n) + 0.5) * cfg.snippet_stride;
      double w = 0.0;
      int cls = -1;
      for (const auto& g : rec.instances) {
        const double wi = blend_weight(g, t, cfg.snippet_stride, cfg.boundary_blend_width);
        if (wi > w) {
          w = wi;
          cls = g.class_id;
        }
      }
      auto row = rec.features.data.row(n);
      for (int d = 0; d < D; ++d) {
        double x = basis.offset[d];
        if (cls < 0) {
          x = basis.background[d] + x;
        } else if (w == 1.0) {
          x = basis.class_prototypes[cls][d] + x;
        } else {
          x = w * basis.class_prototypes[cls][d] + (1.0 - w) * basis.background[d] + x;
        }
        if (cfg.noise_sigma > 0.0) x += cfg.noise_sigma * noise(rng);
        row[d] = static_cast<double>(static_cast<float>(x));
      }
    }
    ds.videos.push_back(std::move(rec));
  }
  return ds;
}

std::vector<int> snippet_labels(const VideoRecord& video) {
  const std::size_t N = video.features.length();
  const double stride = video.features.snippet_stride;
  const int background = video.num_classes();
  std::vector<int> labels(N, background);
  for (std::size_t n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * stride + stride / 2.0;
    double best_start = std::numeric_limits<double>::infinity();
    for (const auto& g : video.instances) {
      if (t >= g.start && t < g.end && g.start < best_start) {
        best_start = g.start;
        labels[n] = g.class_id;
      }
    }
  }
  return labels;
}

void validate_video(const VideoRecord& video, int num_classes) {
  const std::string where = "video '" + video.id + "': ";
  if (video.features.length() < 1 || video.features.dim() < 1) throw Error(where + "empty feature matrix");
  if (!(video.features.snippet_stride > 0.0)) throw Error(where + "snippet_stride must be > 0");
  for (double x : video.features.data.values())
    if (!std::isfinite(x)) throw Error(where + "non-finite feature value");
  if (video.num_classes() != num_classes) throw Error(where + "label length differs from num_classes");
  std::vector<int> derived(num_classes, 0);
  for (const auto& g : video.instances) {
    if (g.class_id < 0 || g.class_id >= num_classes) throw Error(where + "instance class_id out of range");
    if (!(g.end > g.start) || g.start < 0.0 || g.end > video.duration)
      throw Error(where + "instance outside [0, duration] or end <= start");
    derived[g.class_id] = 1;
  }
  if (derived != video.label) throw Error(where + "label does not match instance classes");
}

void validate_dataset(const Dataset& ds) {
  const std::size_t D = ds.feature_dim();
  for (const auto& v : ds.videos) {
    validate_video(v, ds.num_classes);
    if (v.features.dim() != D) throw Error("video '" + v.id + "': feature dimension differs within dataset");
  }
}

DurationStats duration_stats(const Dataset& ds) {
  std::vector<double> d;
  for (const auto& v : ds.videos)
    for (const auto& g : v.instances) d.push_back(g.end - g.start);
  DurationStats s;
  s.count = d.size();
  if (d.empty()) return s;
  std::sort(d.begin(), d.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(d.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, d.size() - 1);
    return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
  };
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  double sum = 0.0;
  for (double x : d) sum += x;
  s.mean = sum / static_cast<double>(d.size());
  return s;
}

// ---- on-disk format ----

namespace {

constexpr std::array<char, 4> kFeatMagic = {'G', 'T', 'F', '1'};
constexpr std::size_t kFeatHeaderBytes = 16;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_file(const FeatureSequence& feats, const fs::path& file) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + file.string() + " for writing");
  os.write(kFeatMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(feats.length()));
  put_u32(os, static_cast<std::uint32_t>(feats.dim()));
  put_u32(os, 0);  // reserved
  for (double x : feats.data.values()) {
    const float f = static_cast<float>(x);
    if (static_cast<double>(f) != x)
      throw Error(file.string() + ": feature value not representable as float32");
    put_u32(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw Error("write failed: " + file.string());
}

FeatureSequence read_feature_file(const fs::path& file, double stride) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot open " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < kFeatHeaderBytes) throw Error(file.string() + ": header: truncated (need 16 bytes)");
  if (std::memcmp(bytes.data(), kFeatMagic.data(), 4) != 0) throw Error(file.string() + ": header: bad magic");
  const std::uint32_t N = get_u32(bytes.data() + 4);
  const std::uint32_t D = get_u32(bytes.data() + 8);
  if (get_u32(bytes.data() + 12) != 0) throw Error(file.string() + ": header: reserved field must be 0");
  if (N == 0 || D == 0) throw Error(file.string() + ": header: N and D must be >= 1");
  const std::size_t expected = kFeatHeaderBytes + 4ULL * N * D;
  if (bytes.size() != expected)
    throw Error(file.string() + ": payload: dimension mismatch (header N=" + std::to_string(N) + ", D=" +
                std::to_string(D) + " needs " + std::to_string(static_cast<std::size_t>(N) * D) + " floats, file has " +
                std::to_string((bytes.size() - kFeatHeaderBytes) / 4) + ")");
  FeatureSequence f;
  f.snippet_stride = stride;
  f.data = Matrix(N, D);
  auto& vals = f.data.values();
  for (std::size_t i = 0; i < vals.size(); ++i)
    vals[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + kFeatHeaderBytes + 4 * i)));
  return f;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["distribution_id"] = ds.distribution_id;
  manifest["split"] = to_string(ds.split);
  manifest["num_classes"] = ds.num_classes;
  json videos = json::array();
  for (const auto& v : ds.videos) {
    json inst = json::array();
    for (const auto& g : v.instances) inst.push_back({{"class_id", g.class_id}, {"start", g.start}, {"end", g.end}});
    videos.push_back({{"id", v.id},
                      {"duration", v.duration},
                      {"stride", v.features.snippet_stride},
                      {"label", v.label},
                      {"instances", inst}});
    write_feature_file(v.features, dir / (v.id + ".feat"));
  }
  manifest["videos"] = videos;
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw Error("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw Error("cannot open " + mpath.string());
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": malformed JSON: " + e.what());
  }
  auto field = [&](const json& obj, const char* name) -> const json& {
    if (!obj.is_object() || !obj.contains(name)) throw Error(mpath.string() + ": missing field '" + name + "'");
    return obj.at(name);
  };
  try {
    const int version = field(m, "format_version").get<int>();
    if (version != kDatasetFormatVersion)
      throw Error(mpath.string() + ": field 'format_version': unknown version " + std::to_string(version));
    Dataset ds;
    ds.distribution_id = field(m, "distribution_id").get<std::string>();
    ds.split = split_from_string(field(m, "split").get<std::string>());
    ds.num_classes = field(m, "num_classes").get<int>();
    for (const auto& jv : field(m, "videos")) {
      VideoRecord v;
      v.id = field(jv, "id").get<std::string>();
      v.duration = field(jv, "duration").get<double>();
      v.label = field(jv, "label").get<std::vector<int>>();
      for (const auto& ji : field(jv, "instances"))
        v.instances.push_back({field(ji, "class_id").get<int>(), field(ji, "start").get<double>(),
                               field(ji, "end").get<double>()});
      v.features = read_feature_file(dir / (v.id + ".feat"), field(jv, "stride").get<double>());
      ds.videos.push_back(std::move(v));
    }
    validate_dataset(ds);
    return ds;
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": malformed field: " + e.what());
  }
}

}  // namespace gtal
