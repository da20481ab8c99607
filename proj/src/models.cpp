#include "rrgnn/models.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rrgnn {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "rrgnn-model/1";

}  // namespace

const char* to_string(ModelRole role) {
  return role == ModelRole::Conformal ? "conformal" : "residual";
}

ModelRole parse_role(const std::string& s) {
  if (s == "conformal") return ModelRole::Conformal;
  if (s == "residual") return ModelRole::Residual;
  throw std::invalid_argument("unknown model role: " + s);
}

const char* to_string(Task task) {
  switch (task) {
    case Task::EdgeWeight: return "EdgeWeight";
    case Task::NodeReg: return "NodeReg";
    case Task::NodeClass: return "NodeClass";
  }
  return "?";
}

const char* to_string(Decoder decoder) { return decoder == Decoder::GAE ? "GAE" : "DiGAE"; }

Task parse_task(const std::string& name) {
  if (name == "EdgeWeight") return Task::EdgeWeight;
  if (name == "NodeReg") return Task::NodeReg;
  if (name == "NodeClass") return Task::NodeClass;
  throw std::invalid_argument("unknown task: " + name);
}

Decoder parse_decoder(const std::string& name) {
  if (name == "GAE") return Decoder::GAE;
  if (name == "DiGAE") return Decoder::DiGAE;
  throw std::invalid_argument("unknown model: " + name);
}

void TriplePrediction::canonicalize() {
  const Matrix lo = lower.cwiseMin(upper);
  upper = lower.cwiseMax(upper);
  lower = lo;
}

Matrix classify_probs(const Matrix& logits) { return ad::softmax_rows_value<double>(logits); }

GnnModel::GnnModel(ModelSpec spec, std::uint64_t seed) : spec_(spec) {
  if (spec_.in_dim <= 0 || spec_.hidden <= 0 || spec_.n_layers < 1)
    throw std::invalid_argument("model dims must be positive");
  if (spec_.task == Task::NodeClass && spec_.n_classes < 2)
    throw std::invalid_argument("classification needs at least two classes");
  if (spec_.task == Task::EdgeWeight && spec_.decoder == Decoder::DiGAE && spec_.embed_dim % 2 != 0)
    throw std::invalid_argument("DiGAE needs an even embedding width");
  build_layers();
  std::mt19937_64 rng(seed);
  for (const auto& layer : layers_) {
    auto p = init_layer(layer, rng);
    for (auto& m : p) params_.push_back(std::move(m));
  }
}

Index GnnModel::head_dim() const {
  switch (spec_.task) {
    case Task::EdgeWeight: return spec_.embed_dim;
    case Task::NodeReg: return 1;
    case Task::NodeClass: return spec_.n_classes;
  }
  return 1;
}

void GnnModel::build_layers() {
  layers_.clear();
  offsets_.clear();
  Index in = spec_.in_dim;
  for (Index l = 0; l < spec_.n_layers; ++l) {
    layers_.push_back({spec_.encoder, in, spec_.hidden, Activation::ReLU});
    in = spec_.hidden;
  }
  for (Index h = 0; h < n_heads(); ++h)
    layers_.push_back({LayerKind::Dense, in, head_dim(), Activation::Identity});
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    offsets_.push_back(offset);
    offset += parameter_count(layer);
  }
}

ad::Tensor inner_product_decode(const ad::Tensor& z, Decoder decoder,
                                const std::shared_ptr<const PairList>& pairs) {
  if (decoder == Decoder::GAE) return ad::pair_dot(z, z, pairs);
  const Eigen::Index half = z.cols() / 2;
  return ad::pair_dot(ad::slice_cols(z, 0, half), ad::slice_cols(z, half, half), pairs);
}

std::vector<ad::Tensor> GnnModel::forward(ad::Tape& tape, const GraphOperators& ops,
                                          const Matrix& features,
                                          const std::shared_ptr<const PairList>& pairs,
                                          std::vector<ad::Tensor>& param_vars) const {
  if (features.cols() != spec_.in_dim) throw std::invalid_argument("feature width mismatch");
  if (spec_.task == Task::EdgeWeight && !pairs)
    throw std::invalid_argument("edge task needs target pairs");
  const std::size_t first = param_vars.size();
  for (const auto& p : params_) param_vars.push_back(tape.variable(p));
  const std::span<const ad::Tensor> vars(param_vars.data() + first, params_.size());

  const auto trunk = static_cast<std::size_t>(spec_.n_layers);
  ad::Tensor h = tape.constant(features);
  for (std::size_t l = 0; l < trunk; ++l)
    h = message_passing_forward(layers_[l], ops, h,
                                vars.subspan(offsets_[l], parameter_count(layers_[l])));

  std::vector<ad::Tensor> heads;
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_heads()); ++k) {
    const std::size_t l = trunk + k;
    ad::Tensor out = message_passing_forward(
        layers_[l], ops, h, vars.subspan(offsets_[l], parameter_count(layers_[l])));
    switch (spec_.task) {
      case Task::EdgeWeight:
        out = inner_product_decode(out, spec_.decoder, pairs);
        break;
      case Task::NodeReg:
        break;
      case Task::NodeClass:
        // Quantile heads live on the probability scale of the one-hot labels.
        if (spec_.role == ModelRole::Conformal && k > 0) out = ad::softmax_rows(out);
        break;
    }
    heads.push_back(out);
  }
  return heads;
}

std::vector<Matrix> GnnModel::embeddings(const GraphOperators& ops, const Matrix& features) const {
  ad::Tape tape;
  std::vector<ad::Tensor> vars;
  for (const auto& p : params_) vars.push_back(tape.constant(p));
  const std::span<const ad::Tensor> all(vars);
  const auto trunk = static_cast<std::size_t>(spec_.n_layers);
  ad::Tensor h = tape.constant(features);
  for (std::size_t l = 0; l < trunk; ++l)
    h = message_passing_forward(layers_[l], ops, h,
                                all.subspan(offsets_[l], parameter_count(layers_[l])));
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_heads()); ++k) {
    const std::size_t l = trunk + k;
    out.push_back(message_passing_forward(layers_[l], ops, h,
                                          all.subspan(offsets_[l], parameter_count(layers_[l])))
                      .value());
  }
  return out;
}

TriplePrediction conformal_forward(const GnnModel& model, const GraphOperators& ops,
                                   const Matrix& features,
                                   const std::shared_ptr<const PairList>& pairs) {
  if (model.spec().role != ModelRole::Conformal)
    throw std::invalid_argument("conformal_forward needs a conformal model");
  ad::Tape tape;
  std::vector<ad::Tensor> vars;
  auto heads = model.forward(tape, ops, features, pairs, vars);
  TriplePrediction out{heads[0].value(), heads[1].value(), heads[2].value()};
  out.canonicalize();
  return out;
}

ResidualPrediction residual_forward(const GnnModel& model, const GraphOperators& ops,
                                    const Matrix& features,
                                    const std::shared_ptr<const PairList>& pairs) {
  if (model.spec().role != ModelRole::Residual)
    throw std::invalid_argument("residual_forward needs a residual model");
  ad::Tape tape;
  std::vector<ad::Tensor> vars;
  auto heads = model.forward(tape, ops, features, pairs, vars);
  return ResidualPrediction{heads[0].value()};
}

std::string GnnModel::to_json() const {
  json j;
  j["format"] = kModelFormat;
  j["role"] = rrgnn::to_string(spec_.role);
  j["task"] = rrgnn::to_string(spec_.task);
  j["encoder"] = rrgnn::to_string(spec_.encoder);
  j["decoder"] = rrgnn::to_string(spec_.decoder);
  j["in_dim"] = spec_.in_dim;
  j["hidden"] = spec_.hidden;
  j["n_layers"] = spec_.n_layers;
  j["embed_dim"] = spec_.embed_dim;
  j["n_classes"] = spec_.n_classes;
  j["layers"] = json::array();
  for (const auto& l : layers_) {
    j["layers"].push_back({{"kind", rrgnn::to_string(l.kind)},
                           {"in_dim", l.in_dim},
                           {"out_dim", l.out_dim},
                           {"activation", l.activation == Activation::ReLU ? "ReLU" : "Identity"}});
  }
  j["params"] = json::array();
  for (const auto& p : params_) {
    std::vector<double> data(p.data(), p.data() + p.size());  // column-major
    j["params"].push_back({{"rows", p.rows()}, {"cols", p.cols()}, {"data", data}});
  }
  return j.dump();
}

GnnModel GnnModel::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format").get<std::string>() != kModelFormat)
    throw std::runtime_error("unsupported model format");
  GnnModel m;
  m.spec_.role = parse_role(j.at("role").get<std::string>());
  m.spec_.task = parse_task(j.at("task").get<std::string>());
  m.spec_.encoder = parse_layer_kind(j.at("encoder").get<std::string>());
  m.spec_.decoder = parse_decoder(j.at("decoder").get<std::string>());
  m.spec_.in_dim = j.at("in_dim").get<Index>();
  m.spec_.hidden = j.at("hidden").get<Index>();
  m.spec_.n_layers = j.at("n_layers").get<Index>();
  m.spec_.embed_dim = j.at("embed_dim").get<Index>();
  m.spec_.n_classes = j.at("n_classes").get<int>();
  m.build_layers();

  const auto& layers = j.at("layers");
  if (layers.size() != m.layers_.size()) throw std::runtime_error("layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const LayerSpec expected = m.layers_[i];
    if (parse_layer_kind(l.at("kind").get<std::string>()) != expected.kind ||
        l.at("in_dim").get<Index>() != expected.in_dim ||
        l.at("out_dim").get<Index>() != expected.out_dim)
      throw std::runtime_error("layer spec mismatch");
  }
  std::size_t expected_params = 0;
  for (const auto& l : m.layers_) expected_params += parameter_count(l);
  const auto& params = j.at("params");
  if (params.size() != expected_params) throw std::runtime_error("parameter count mismatch");
  for (const auto& p : params) {
    const auto rows = p.at("rows").get<Index>();
    const auto cols = p.at("cols").get<Index>();
    const auto data = p.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols)
      throw std::runtime_error("parameter size mismatch");
    m.params_.push_back(Eigen::Map<const Matrix>(data.data(), rows, cols));
  }
  return m;
}

void GnnModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json() << '\n';
}

GnnModel GnnModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace rrgnn
