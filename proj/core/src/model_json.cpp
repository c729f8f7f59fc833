#include "charme/model_json.hpp"
#include "charme/error.hpp"

#include <fstream>
#include <sstream>

namespace charme {

namespace {

template <typename T>
T required(const Json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key))
    throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
  }
}

std::string volatility_kind_name(VolatilitySpec::Kind kind) {
  return kind == VolatilitySpec::Kind::ConstantOne ? "constant_one" : "network";
}

std::string family_name(InnovationSpec::Family family) {
  switch (family) {
    case InnovationSpec::Family::StandardGaussian: return "standard_gaussian";
    case InnovationSpec::Family::ScaledGaussian: return "scaled_gaussian";
    case InnovationSpec::Family::TwoPointHalf: return "two_point_half";
  }
  return "standard_gaussian";
}

}  // namespace

Json to_json(const FeedforwardNet& net) {
  Json weights = Json::array();
  Json biases = Json::array();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& w = net.weight(l);
    Json rows = Json::array();
    for (Index i = 0; i < w.rows(); ++i) {
      Json row = Json::array();
      for (Index j = 0; j < w.cols(); ++j) row.push_back(w(i, j));
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
    const auto& b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  Json doc;
  doc["widths"] = net.widths();
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["activation"] = std::string(to_string(net.activation().tag()));
  return doc;
}

FeedforwardNet net_from_json(const Json& doc) {
  const auto widths = required<std::vector<Index>>(doc, "widths");
  const auto weights = required<std::vector<std::vector<std::vector<double>>>>(doc, "weights");
  const auto biases = required<std::vector<std::vector<double>>>(doc, "biases");
  const auto act_name = required<std::string>(doc, "activation");
  const auto tag = activation_from_string(act_name);
  if (!tag) throw Error(ErrorCode::ParseError, "unknown activation '" + act_name + "'");
  if (widths.size() != weights.size() + 1 || biases.size() != weights.size())
    throw Error(ErrorCode::ShapeMismatch, "widths, weights and biases disagree on layer count");

  std::vector<Matrix> ws;
  std::vector<Vector> bs;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& rows = weights[l];
    const auto n_rows = static_cast<Index>(rows.size());
    if (n_rows != widths[l + 1]) throw Error(ErrorCode::ShapeMismatch, "weight rows disagree with widths");
    Matrix w(n_rows, widths[l]);
    for (Index i = 0; i < n_rows; ++i) {
      if (static_cast<Index>(rows[i].size()) != widths[l])
        throw Error(ErrorCode::ShapeMismatch, "weight columns disagree with widths");
      for (Index j = 0; j < widths[l]; ++j) w(i, j) = rows[i][j];
    }
    if (static_cast<Index>(biases[l].size()) != widths[l + 1])
      throw Error(ErrorCode::ShapeMismatch, "bias length disagrees with widths");
    ws.push_back(std::move(w));
    bs.push_back(Eigen::Map<const Vector>(biases[l].data(), widths[l + 1]));
  }
  return FeedforwardNet(std::move(ws), std::move(bs), Activation(*tag));
}

Json to_json(const CharmeModel& model) {
  Json experts = Json::array();
  for (const auto& e : model.experts) {
    Json g;
    g["kind"] = volatility_kind_name(e.g.kind);
    if (!e.g.is_constant()) {
      g["floor"] = e.g.floor;
      if (e.g.net) g["net"] = to_json(*e.g.net);
    }
    experts.push_back({{"f", to_json(e.f)}, {"g", std::move(g)}});
  }
  Json innovation;
  innovation["family"] = family_name(model.innovation.family);
  if (model.innovation.family == InnovationSpec::Family::ScaledGaussian)
    innovation["sigma"] = model.innovation.sigma;

  Json doc;
  doc["d"] = model.d;
  doc["p"] = model.p;
  doc["K"] = model.K;
  doc["pi"] = model.pi;
  doc["experts"] = std::move(experts);
  doc["innovation"] = std::move(innovation);
  return doc;
}

CharmeModel model_from_json(const Json& doc) {
  CharmeModel model;
  model.d = required<Index>(doc, "d");
  model.p = required<Index>(doc, "p");
  model.K = required<Index>(doc, "K");
  model.pi = required<std::vector<double>>(doc, "pi");
  const auto experts = required<Json>(doc, "experts");
  if (!experts.is_array()) throw Error(ErrorCode::ParseError, "'experts' must be an array");
  for (const auto& e : experts) {
    FeedforwardNet f = net_from_json(required<Json>(e, "f"));
    const auto g_doc = required<Json>(e, "g");
    const auto kind = required<std::string>(g_doc, "kind");
    VolatilitySpec g;
    if (kind == "constant_one") {
      g = VolatilitySpec::constant_one();
    } else if (kind == "network") {
      g.kind = VolatilitySpec::Kind::Network;
      g.floor = required<double>(g_doc, "floor");
      if (g_doc.contains("net")) g.net = net_from_json(g_doc.at("net"));
    } else {
      throw Error(ErrorCode::ParseError, "unknown volatility kind '" + kind + "'");
    }
    model.experts.push_back({std::move(f), std::move(g)});
  }
  const auto innovation = required<Json>(doc, "innovation");
  const auto family = required<std::string>(innovation, "family");
  if (family == "standard_gaussian") {
    model.innovation = InnovationSpec::standard_gaussian();
  } else if (family == "scaled_gaussian") {
    model.innovation = InnovationSpec::scaled_gaussian(required<double>(innovation, "sigma"));
  } else if (family == "two_point_half") {
    model.innovation = InnovationSpec::two_point_half();
  } else {
    throw Error(ErrorCode::ParseError, "unknown innovation family '" + family + "'");
  }
  return model;
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << dump_json(doc);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

CharmeModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

void save_model(const std::filesystem::path& path, const CharmeModel& model) {
  write_json_file(path, to_json(model));
}

Json to_json(const ValidationReport& report) {
  Json out = Json::array();
  for (const auto& v : report.violations) out.push_back({{"code", v.code}, {"message", v.message}});
  return out;
}

}  // namespace charme
