#include "balsel/io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace balsel {

namespace {

using nlohmann::json;

constexpr std::string_view kLabelsTextMagic = "balsel-active-labels v1";
constexpr std::string_view kLabelsBinaryMagic = "BSLABv01";
constexpr std::string_view kGroundTruthMagic = "BSGTRv01";

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(read(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read(4)); }
  std::uint64_t u64() { return read(8); }

  void expect_magic(std::string_view magic) {
    if (bytes_.size() < offset_ + magic.size() ||
        bytes_.substr(offset_, magic.size()) != magic) {
      throw IoError(path_.string() + ": bad or missing magic");
    }
    offset_ += magic.size();
  }

  void expect_exhausted() {
    if (offset_ != bytes_.size()) {
      throw IoError(path_.string() + ": trailing bytes after the last record");
    }
  }

 private:
  std::uint64_t read(unsigned n) {
    if (bytes_.size() < offset_ + n) throw IoError(path_.string() + ": truncated file");
    std::uint64_t v = 0;
    for (unsigned i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[offset_ + i])) << (8 * i);
    }
    offset_ += n;
    return v;
  }

  std::string_view bytes_;
  std::size_t offset_ = 0;
  const std::filesystem::path& path_;
};

std::int64_t parse_header_int(std::string_view token, std::string_view key,
                              const std::filesystem::path& path) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() ||
      token[key.size()] != '=') {
    throw IoError(path.string() + ": expected header field '" + std::string(key) + "'");
  }
  const std::string_view value = token.substr(key.size() + 1);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw IoError(path.string() + ": malformed header value for '" + std::string(key) + "'");
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream stream(line);
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (char b : bytes) {
    hash ^= static_cast<unsigned char>(b);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hash_hex(std::uint64_t hash) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

std::uint64_t parse_hash_hex(std::string_view hex) {
  if (hex.size() != 16) throw IoError("manifest hash must be 16 hex digits");
  std::uint64_t out = 0;
  for (char c : hex) {
    out <<= 4;
    if (c >= '0' && c <= '9') {
      out |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      out |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      throw IoError("manifest hash must be lowercase hex");
    }
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_active_labels_text(const std::filesystem::path& path, const ActiveLabelStore& store,
                              std::uint64_t manifest_hash) {
  const DatasetShape& shape = store.shape();
  std::string out;
  out += kLabelsTextMagic;
  out += '\n';
  out += "num_images=" + std::to_string(shape.num_images) +
         " height=" + std::to_string(shape.height) + " width=" + std::to_string(shape.width) +
         " num_classes=" + std::to_string(shape.num_classes) +
         " manifest=" + hash_hex(manifest_hash) + "\n";
  out += "image_index\trow\tcol\ttrue_class\tal_iteration\n";
  for (const ActiveLabelEntry& e : store.sorted_entries()) {
    out += std::to_string(e.image_index) + "\t" + std::to_string(e.row) + "\t" +
           std::to_string(e.col) + "\t" + std::to_string(e.true_class) + "\t" +
           std::to_string(e.al_iteration) + "\n";
  }
  write_text_file(path, out);
}

void write_active_labels_binary(const std::filesystem::path& path, const ActiveLabelStore& store,
                                std::uint64_t manifest_hash) {
  const DatasetShape& shape = store.shape();
  const auto sorted = store.sorted_entries();
  std::string out;
  out.reserve(48 + sorted.size() * 16);
  out += kLabelsBinaryMagic;
  put_u64(out, static_cast<std::uint64_t>(shape.num_images));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  put_u32(out, static_cast<std::uint32_t>(shape.num_classes));
  put_u64(out, manifest_hash);
  put_u64(out, sorted.size());
  for (const ActiveLabelEntry& e : sorted) {
    put_u32(out, static_cast<std::uint32_t>(e.image_index));
    put_u32(out, static_cast<std::uint32_t>(e.row));
    put_u32(out, static_cast<std::uint32_t>(e.col));
    put_u16(out, e.true_class);
    put_u16(out, static_cast<std::uint16_t>(e.al_iteration));
  }
  write_text_file(path, out);
}

namespace {

ActiveLabelsFile read_active_labels_text(const std::string& content,
                                         const std::filesystem::path& path) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || line != kLabelsTextMagic) {
    throw IoError(path.string() + ": not an active-labels text file");
  }
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header line");
  const auto tokens = split_ws(line);
  if (tokens.size() != 5) throw IoError(path.string() + ": header must have five fields");

  DatasetShape shape;
  shape.num_images = parse_header_int(tokens[0], "num_images", path);
  shape.height = static_cast<std::int32_t>(parse_header_int(tokens[1], "height", path));
  shape.width = static_cast<std::int32_t>(parse_header_int(tokens[2], "width", path));
  shape.num_classes = static_cast<std::int32_t>(parse_header_int(tokens[3], "num_classes", path));
  if (tokens[4].substr(0, 9) != "manifest=") {
    throw IoError(path.string() + ": expected header field 'manifest'");
  }

  ActiveLabelsFile file;
  file.manifest_hash = parse_hash_hex(std::string_view(tokens[4]).substr(9));
  file.store = ActiveLabelStore(shape);

  if (!std::getline(in, line) || line != "image_index\trow\tcol\ttrue_class\tal_iteration") {
    throw IoError(path.string() + ": missing column header");
  }
  std::int64_t line_no = 3;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::array<std::int64_t, 5> fields{};
    const char* cursor = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const auto [ptr, ec] = std::from_chars(cursor, end, fields[f]);
      if (ec != std::errc{}) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
      }
      cursor = ptr;
      if (f + 1 < fields.size()) {
        if (cursor == end || *cursor != '\t') {
          throw IoError(path.string() + ":" + std::to_string(line_no) +
                        ": records must be tab-separated");
        }
        ++cursor;
      }
    }
    if (cursor != end) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": trailing characters");
    }
    file.store.add(static_cast<std::int32_t>(fields[0]), static_cast<std::int32_t>(fields[1]),
                   static_cast<std::int32_t>(fields[2]), static_cast<ClassId>(fields[3]),
                   static_cast<std::int32_t>(fields[4]));
  }
  return file;
}

ActiveLabelsFile read_active_labels_binary(const std::string& content,
                                           const std::filesystem::path& path) {
  ByteReader reader(content, path);
  reader.expect_magic(kLabelsBinaryMagic);
  DatasetShape shape;
  shape.num_images = static_cast<std::int64_t>(reader.u64());
  shape.height = static_cast<std::int32_t>(reader.u32());
  shape.width = static_cast<std::int32_t>(reader.u32());
  shape.num_classes = static_cast<std::int32_t>(reader.u32());

  ActiveLabelsFile file;
  file.manifest_hash = reader.u64();
  file.store = ActiveLabelStore(shape);
  const std::uint64_t count = reader.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto image = static_cast<std::int32_t>(reader.u32());
    const auto row = static_cast<std::int32_t>(reader.u32());
    const auto col = static_cast<std::int32_t>(reader.u32());
    const auto cls = static_cast<ClassId>(reader.u16());
    const auto iteration = static_cast<std::int32_t>(reader.u16());
    file.store.add(image, row, col, cls, iteration);
  }
  reader.expect_exhausted();
  return file;
}

}  // namespace

ActiveLabelsFile read_active_labels(const std::filesystem::path& path) {
  const std::string content = read_text_file(path);
  if (content.size() >= kLabelsBinaryMagic.size() &&
      std::string_view(content).substr(0, kLabelsBinaryMagic.size()) == kLabelsBinaryMagic) {
    return read_active_labels_binary(content, path);
  }
  return read_active_labels_text(content, path);
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& ground_truth,
                        const DatasetShape& shape, std::uint64_t manifest_hash) {
  shape.validate();
  if (static_cast<std::int64_t>(ground_truth.labels.size()) != shape.num_images) {
    throw ShapeError("ground truth must cover every image");
  }
  std::string out;
  out.reserve(40 + static_cast<std::size_t>(shape.total_pixels()) * 2);
  out += kGroundTruthMagic;
  put_u64(out, static_cast<std::uint64_t>(shape.num_images));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  put_u32(out, static_cast<std::uint32_t>(shape.num_classes));
  put_u64(out, manifest_hash);
  for (const auto& grid : ground_truth.labels) {
    if (grid.height() != shape.height || grid.width() != shape.width) {
      throw ShapeError("ground truth grid dimensions differ from the dataset shape");
    }
    for (ClassId c : grid.flat()) put_u16(out, c);
  }
  write_text_file(path, out);
}

GroundTruthFile read_ground_truth(const std::filesystem::path& path) {
  const std::string content = read_text_file(path);
  ByteReader reader(content, path);
  reader.expect_magic(kGroundTruthMagic);
  GroundTruthFile file;
  file.shape.num_images = static_cast<std::int64_t>(reader.u64());
  file.shape.height = static_cast<std::int32_t>(reader.u32());
  file.shape.width = static_cast<std::int32_t>(reader.u32());
  file.shape.num_classes = static_cast<std::int32_t>(reader.u32());
  file.shape.validate();
  file.manifest_hash = reader.u64();
  file.ground_truth.labels.reserve(static_cast<std::size_t>(file.shape.num_images));
  for (std::int64_t img = 0; img < file.shape.num_images; ++img) {
    Grid<ClassId> grid(file.shape.height, file.shape.width);
    for (ClassId& c : grid.flat()) {
      c = reader.u16();
      if (c >= file.shape.num_classes) {
        throw IoError(path.string() + ": ground truth class id out of range");
      }
    }
    file.ground_truth.labels.push_back(std::move(grid));
  }
  reader.expect_exhausted();
  return file;
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> known,
                         std::string_view section) {
  for (const auto& [key, value] : object.items()) {
    bool found = false;
    for (std::string_view k : known) {
      if (key == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("unknown key '" + std::string(section) +
                        (section.empty() ? "" : ".") + key + "'");
    }
  }
}

const json& require(const json& object, const char* key, std::string_view section) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw ConfigError("missing required key '" + std::string(section) + "." + key + "'");
  }
  return *it;
}

template <typename T>
T as_number(const json& value, std::string_view field) {
  if (!value.is_number()) {
    throw ConfigError(std::string(field) + ": must be a number");
  }
  return value.get<T>();
}

std::vector<double> as_double_vector(const json& value, std::string_view field) {
  if (!value.is_array()) throw ConfigError(std::string(field) + ": must be an array");
  std::vector<double> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_number()) throw ConfigError(std::string(field) + ": entries must be numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(root, {"scenario", "schedule", "report"}, "");

  RunConfig config;

  const json& scenario = require(root, "scenario", "");
  if (!scenario.is_object()) throw ConfigError("scenario: must be an object");
  reject_unknown_keys(scenario,
                      {"num_images", "height", "width", "num_classes", "class_frequencies",
                       "spatial_granularity", "noise_schedule", "seed"},
                      "scenario");
  config.scenario.shape.num_images =
      as_number<std::int64_t>(require(scenario, "num_images", "scenario"), "scenario.num_images");
  config.scenario.shape.height =
      as_number<std::int32_t>(require(scenario, "height", "scenario"), "scenario.height");
  config.scenario.shape.width =
      as_number<std::int32_t>(require(scenario, "width", "scenario"), "scenario.width");
  config.scenario.shape.num_classes = as_number<std::int32_t>(
      require(scenario, "num_classes", "scenario"), "scenario.num_classes");
  config.scenario.class_frequencies = as_double_vector(
      require(scenario, "class_frequencies", "scenario"), "scenario.class_frequencies");
  config.scenario.spatial_granularity =
      as_number<std::int32_t>(require(scenario, "spatial_granularity", "scenario"),
                              "scenario.spatial_granularity");
  config.scenario.seed =
      as_number<std::uint64_t>(require(scenario, "seed", "scenario"), "scenario.seed");
  if (scenario.contains("noise_schedule")) {
    config.scenario.noise_schedule =
        as_double_vector(scenario["noise_schedule"], "scenario.noise_schedule");
    config.explicit_noise_schedule = true;
  }

  const json& schedule = require(root, "schedule", "");
  if (!schedule.is_object()) throw ConfigError("schedule: must be an object");
  reject_unknown_keys(
      schedule, {"budget_fraction", "num_al_iterations", "goal_distribution", "epsilon"},
      "schedule");
  config.schedule.budget_fraction = as_number<double>(
      require(schedule, "budget_fraction", "schedule"), "schedule.budget_fraction");
  config.schedule.num_al_iterations = as_number<std::int32_t>(
      require(schedule, "num_al_iterations", "schedule"), "schedule.num_al_iterations");
  if (schedule.contains("goal_distribution")) {
    config.schedule.goal_distribution =
        as_double_vector(schedule["goal_distribution"], "schedule.goal_distribution");
    config.explicit_goal = true;
  }
  if (schedule.contains("epsilon")) {
    config.schedule.epsilon = as_number<double>(schedule["epsilon"], "schedule.epsilon");
  }

  if (root.contains("report")) {
    const json& report = root["report"];
    if (!report.is_object()) throw ConfigError("report: must be an object");
    reject_unknown_keys(report, {"histogram_bins"}, "report");
    if (report.contains("histogram_bins")) {
      config.histogram_bins =
          as_number<std::int32_t>(report["histogram_bins"], "report.histogram_bins");
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

std::vector<double> default_noise_schedule(std::int32_t num_al_iterations) {
  if (num_al_iterations < 1) throw ConfigError("num_al_iterations: must be at least 1");
  std::vector<double> schedule(static_cast<std::size_t>(num_al_iterations));
  if (num_al_iterations == 1) {
    schedule[0] = 0.5;
    return schedule;
  }
  for (std::int32_t i = 0; i < num_al_iterations; ++i) {
    schedule[static_cast<std::size_t>(i)] =
        0.9 - 0.8 * static_cast<double>(i) / static_cast<double>(num_al_iterations - 1);
  }
  return schedule;
}

std::string canonical_scenario(const ScenarioConfig& scenario) {
  json j;
  j["num_images"] = scenario.shape.num_images;
  j["height"] = scenario.shape.height;
  j["width"] = scenario.shape.width;
  j["num_classes"] = scenario.shape.num_classes;
  j["class_frequencies"] = scenario.class_frequencies;
  j["spatial_granularity"] = scenario.spatial_granularity;
  j["noise_schedule"] = scenario.noise_schedule;
  j["seed"] = scenario.seed;
  return j.dump();
}

std::string canonical_ground_truth_identity(const ScenarioConfig& scenario) {
  json j;
  j["num_images"] = scenario.shape.num_images;
  j["height"] = scenario.shape.height;
  j["width"] = scenario.shape.width;
  j["num_classes"] = scenario.shape.num_classes;
  j["class_frequencies"] = scenario.class_frequencies;
  j["spatial_granularity"] = scenario.spatial_granularity;
  j["seed"] = scenario.seed;
  return j.dump();
}

std::string canonical_config(const RunConfig& config) {
  json j;
  j["scenario"] = json::parse(canonical_scenario(config.scenario));
  j["schedule"]["budget_fraction"] = config.schedule.budget_fraction;
  j["schedule"]["num_al_iterations"] = config.schedule.num_al_iterations;
  j["schedule"]["goal_distribution"] = config.schedule.goal_distribution;
  j["schedule"]["epsilon"] = config.schedule.epsilon;
  j["report"]["histogram_bins"] = config.histogram_bins;
  return j.dump();
}

}  // namespace balsel
