#include "umd/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace umd {

namespace {

constexpr char kModelMagic[3] = {'U', 'M', 'D'};
constexpr char kDatasetMagic[4] = {'U', 'M', 'D', 'D'};

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("truncated file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_f64(std::ostream& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

void put_u32(std::ostream& out, std::size_t n) {
  if (n > std::numeric_limits<std::uint32_t>::max()) throw InputError("value too large for u32 field");
  put_le(out, static_cast<std::uint32_t>(n));
}

template <std::size_t N>
void check_header(std::istream& in, const char (&magic)[N], std::uint8_t version, const char* what) {
  char got[N];
  if (!in.read(got, N)) throw FormatError(std::string("truncated ") + what + " file");
  if (!std::equal(got, got + N, magic)) throw FormatError(std::string("not a ") + what + " file");
  const auto v = get_le<std::uint8_t>(in);
  if (v != version)
    throw FormatError(std::string("unsupported ") + what + " format version " + std::to_string(v));
}

void check_end(std::istream& in, const char* what) {
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(std::string("trailing bytes after ") + what);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

Json number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw FormatError("expected a number, got " + j.dump());
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Vector vector_from(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

Json pairs_json(const std::vector<ClassPair>& pairs) {
  Json a = Json::array();
  for (const auto& p : pairs) a.push_back(to_json(p));
  return a;
}

std::vector<ClassPair> pairs_from(const Json& j) {
  std::vector<ClassPair> out;
  for (const auto& e : j) out.push_back(pair_from_json(e));
  return out;
}

Method method_from(const std::string& s) {
  if (s == "umd") return Method::umd;
  if (s == "umd-dagger") return Method::umd_dagger;
  if (s == "umd-ddagger") return Method::umd_ddagger;
  throw FormatError("unknown method '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

void write_model(std::ostream& out, const Network& net) {
  out.write(kModelMagic, 3);
  put_le(out, kModelFormatVersion);
  put_u32(out, net.output_dim());
  put_u32(out, net.input_dim());
  put_u32(out, net.num_layers());
  for (const auto& layer : net.layers()) {
    put_u32(out, layer.outputs());
    put_u32(out, layer.inputs());
    put_le(out, static_cast<std::uint8_t>(layer.activation));
    const double* w = layer.weights.data();
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) put_f64(out, w[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f64(out, layer.bias(i));
  }
}

Network read_model(std::istream& in) {
  check_header(in, kModelMagic, kModelFormatVersion, "model");
  const auto k = get_le<std::uint32_t>(in);
  const auto d = get_le<std::uint32_t>(in);
  const auto count = get_le<std::uint32_t>(in);
  if (count == 0) throw FormatError("model has no layers");
  std::vector<DenseLayer> layers(count);
  for (auto& layer : layers) {
    const auto rows = get_le<std::uint32_t>(in);
    const auto cols = get_le<std::uint32_t>(in);
    const auto act = get_le<std::uint8_t>(in);
    if (act > 1) throw FormatError("unknown activation code " + std::to_string(act));
    if (rows == 0 || cols == 0) throw FormatError("empty layer");
    layer.activation = static_cast<Activation>(act);
    layer.weights.resize(rows, cols);
    double* w = layer.weights.data();
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) w[i] = get_f64(in);
    layer.bias.resize(rows);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = get_f64(in);
  }
  check_end(in, "model");
  if (layers.front().inputs() != d || layers.back().outputs() != k)
    throw FormatError("model header K/d disagree with its layers");
  try {
    return Network(std::move(layers));
  } catch (const InputError& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const Network& net) {
  auto out = open_out(path);
  write_model(out, net);
  if (!out) throw IoError("failed writing " + path.string());
}

Network load_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_model(in);
}

// ---------------------------------------------------------------------------
// Datasets

void write_dataset(std::ostream& out, const LabeledDataset& data) {
  out.write(kDatasetMagic, 4);
  put_le(out, kDatasetFormatVersion);
  put_u32(out, data.num_classes());
  put_u32(out, data.input_dim());
  put_le(out, static_cast<std::uint64_t>(data.size()));
  const Matrix& x = data.inputs();
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) put_f64(out, x(static_cast<Eigen::Index>(r), c));
    put_le(out, static_cast<std::uint16_t>(data.labels()[r]));
  }
}

LabeledDataset read_dataset(std::istream& in) {
  check_header(in, kDatasetMagic, kDatasetFormatVersion, "dataset");
  const auto k = get_le<std::uint32_t>(in);
  const auto d = get_le<std::uint32_t>(in);
  const auto n = get_le<std::uint64_t>(in);
  if (k < 2 || d == 0) throw FormatError("dataset header has invalid K or d");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> labels(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(r), c) = get_f64(in);
    labels[r] = get_le<std::uint16_t>(in);
    if (labels[r] >= static_cast<int>(k)) throw FormatError("dataset label out of range");
  }
  check_end(in, "dataset");
  return LabeledDataset(k, std::move(x), std::move(labels));
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data) {
  auto out = open_out(path);
  write_dataset(out, data);
  if (!out) throw IoError("failed writing " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// JSON documents

Json to_json(const ClassPair& pair) {
  Json j;
  j["source"] = pair.source;
  j["target"] = pair.target;
  return j;
}

ClassPair pair_from_json(const Json& j) {
  try {
    return ClassPair(j.at("source").get<int>(), j.at("target").get<int>());
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad class pair: ") + e.what());
  }
}

Json to_json(const TriggerSpec& trigger) {
  Json j;
  j["kind"] = trigger.kind == TriggerKind::perturbation ? "perturbation" : "patch";
  j["pattern"] = vector_json(trigger.pattern);
  if (trigger.kind == TriggerKind::patch) j["mask"] = vector_json(trigger.mask);
  return j;
}

TriggerSpec trigger_from_json(const Json& j) {
  TriggerSpec t;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "perturbation") {
    t.kind = TriggerKind::perturbation;
  } else if (kind == "patch") {
    t.kind = TriggerKind::patch;
    t.mask = vector_from(j.at("mask"));
  } else {
    throw FormatError("unknown trigger kind '" + kind + "'");
  }
  t.pattern = vector_from(j.at("pattern"));
  return t;
}

Json to_json(const AttackSpec& attack) {
  Json j;
  j["pairs"] = pairs_json(attack.pairs);
  j["poison_per_source"] = attack.poison_per_source;
  j["trigger"] = to_json(attack.trigger);
  return j;
}

AttackSpec attack_from_json(const Json& j) {
  try {
    AttackSpec a;
    a.pairs = pairs_from(j.at("pairs"));
    a.poison_per_source = j.at("poison_per_source").get<std::size_t>();
    a.trigger = trigger_from_json(j.at("trigger"));
    return a;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad attack spec: ") + e.what());
  }
}

Json to_json(const TRMatrix& tr) {
  Json j;
  j["num_classes"] = tr.num_classes;
  j["pairs"] = pairs_json(tr.pairs);
  Json rows = Json::array();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < tr.size(); ++k) row.push_back(number(tr.at(i, k)));
    rows.push_back(std::move(row));
  }
  j["values"] = std::move(rows);
  return j;
}

TRMatrix tr_from_json(const Json& j) {
  TRMatrix tr;
  tr.num_classes = j.at("num_classes").get<std::size_t>();
  tr.pairs = pairs_from(j.at("pairs"));
  const auto n = static_cast<Eigen::Index>(tr.pairs.size());
  const Json& rows = j.at("values");
  if (rows.size() != tr.pairs.size()) throw FormatError("TR matrix row count mismatch");
  tr.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Json& row = rows[static_cast<std::size_t>(i)];
    if (row.size() != tr.pairs.size()) throw FormatError("TR matrix column count mismatch");
    for (Eigen::Index k = 0; k < n; ++k) tr.values(i, k) = number_from(row[static_cast<std::size_t>(k)]);
  }
  return tr;
}

Json to_json(const DetectionReport& report) {
  Json j;
  j["attacked"] = report.attacked;
  j["score"] = number(report.score);
  j["threshold"] = number(report.threshold);
  j["beta"] = report.beta;
  j["n_null"] = report.n_null;
  j["mode"] = to_string(report.mode);
  j["method"] = to_string(report.method);
  j["seed"] = report.seed;
  j["selected"] = pairs_json(report.selected.pairs);
  j["objective"] = number(report.selected.objective);
  j["detected"] = pairs_json(report.detected);
  Json pairs = Json::array();
  for (const auto& [pair, est] : report.estimates) {
    Json p;
    p["source"] = pair.source;
    p["target"] = pair.target;
    p["z"] = number(est.size);
    p["converged"] = est.converged;
    p["steps"] = est.steps_used;
    p["achieved"] = number(est.achieved_fraction);
    p["re_mode"] = to_string(est.mode);
    if (est.mode == ReMode::intermediate) {
      p["layer_index"] = est.layer_index;
      p["feature_shift"] = vector_json(est.feature_shift);
    } else {
      p["trigger"] = to_json(est.trigger);
    }
    pairs.push_back(std::move(p));
  }
  j["pairs"] = std::move(pairs);
  if (report.tr) j["tr_matrix"] = to_json(*report.tr);
  if (!report.auxiliary.empty()) {
    Json aux = Json::array();
    for (const auto& a : report.auxiliary) aux.push_back(to_json(a));
    j["auxiliary"] = std::move(aux);
  }
  return j;
}

DetectionReport report_from_json(const Json& j) {
  try {
    DetectionReport r;
    r.attacked = j.at("attacked").get<bool>();
    r.score = number_from(j.at("score"));
    r.threshold = number_from(j.at("threshold"));
    r.beta = j.at("beta").get<double>();
    r.n_null = j.at("n_null").get<std::size_t>();
    r.mode = parse_detect_mode(j.at("mode").get<std::string>());
    r.method = method_from(j.at("method").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.selected.pairs = pairs_from(j.at("selected"));
    r.selected.objective = number_from(j.at("objective"));
    r.detected = pairs_from(j.at("detected"));
    for (const auto& p : j.at("pairs")) {
      TriggerEstimate est;
      est.pair = pair_from_json(p);
      est.size = number_from(p.at("z"));
      est.converged = p.at("converged").get<bool>();
      est.steps_used = p.at("steps").get<std::size_t>();
      est.achieved_fraction = number_from(p.at("achieved"));
      est.mode = parse_re_mode(p.at("re_mode").get<std::string>());
      if (est.mode == ReMode::intermediate) {
        est.layer_index = p.at("layer_index").get<std::size_t>();
        est.feature_shift = vector_from(p.at("feature_shift"));
      } else {
        est.trigger = trigger_from_json(p.at("trigger"));
      }
      r.estimates.emplace(est.pair, std::move(est));
    }
    if (j.contains("tr_matrix")) r.tr = tr_from_json(j.at("tr_matrix"));
    if (j.contains("auxiliary"))
      for (const auto& a : j.at("auxiliary")) r.auxiliary.push_back(report_from_json(a));
    if (r.attacked && r.detected.empty()) throw FormatError("attacked report lists no pairs");
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad detection report: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("bad detection report: ") + e.what());
  }
}

std::string tr_to_csv(const TRMatrix& tr, bool row_normalize) {
  const Matrix values = row_normalize ? tr.row_normalized() : tr.values;
  std::ostringstream out;
  out << std::setprecision(17);
  out << "pair";
  for (const auto& p : tr.pairs) out << ',' << p.source << "->" << p.target;
  out << '\n';
  for (std::size_t i = 0; i < tr.size(); ++i) {
    out << tr.pairs[i].source << "->" << tr.pairs[i].target;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      out << ',';
      const double v = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (i != k && !std::isnan(v)) out << v;
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Text helpers

std::string read_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Json load_json(const std::filesystem::path& path) {
  const auto text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace umd
