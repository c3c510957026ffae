#include "stigma/model/dcn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stigma/common/csv.hpp"
#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"
#include "stigma/common/rng.hpp"

namespace stigma::model {

void DcnConfig::validate() const {
  if (content_dim == 0) throw ArgumentError("DcnConfig: content_dim must be positive");
  if (use_person && n_workers == 0) throw ArgumentError("DcnConfig: n_workers must be positive");
  if (cross_layers == 0) throw ArgumentError("DcnConfig: cross_layers must be positive");
  if (deep_widths.empty()) throw ArgumentError("DcnConfig: deep_widths must not be empty");
  for (auto w : deep_widths) {
    if (w == 0) throw ArgumentError("DcnConfig: deep widths must be positive");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("DcnConfig: lr must be positive");
  if (batch_size == 0) throw ArgumentError("DcnConfig: batch_size must be positive");
  if (joint_epochs > epochs) throw ArgumentError("DcnConfig: joint_epochs exceeds epochs");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ArgumentError("DcnConfig: invalid Adam hyperparameters");
  }
}

std::vector<TensorSpec> parameter_layout(const DcnConfig& config) {
  config.validate();
  std::vector<TensorSpec> out;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    TensorSpec t{std::move(name), static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols), offset};
    offset += t.size();
    out.push_back(std::move(t));
  };
  const std::size_t d = config.input_dim();
  for (std::size_t l = 0; l < config.cross_layers; ++l) {
    add("cross_W" + std::to_string(l), d, d);
    add("cross_b" + std::to_string(l), d, 1);
  }
  std::size_t in = d;
  for (std::size_t k = 0; k < config.deep_widths.size(); ++k) {
    add("deep_W" + std::to_string(k), config.deep_widths[k], in);
    add("deep_b" + std::to_string(k), config.deep_widths[k], 1);
    in = config.deep_widths[k];
  }
  add("out_w", 1, in);
  add("out_b", 1, 1);
  return out;
}

DcnParams DcnParams::zeros(const DcnConfig& config) {
  DcnParams p;
  p.layout = parameter_layout(config);
  const auto& last = p.layout.back();
  p.flat = Eigen::VectorXd::Zero(last.offset + last.size());
  return p;
}

DcnParams DcnParams::glorot(const DcnConfig& config, std::uint64_t seed) {
  DcnParams p = zeros(config);
  SplitMix64 rng(derive_seed(seed, "dcn_init"));
  for (std::size_t i = 0; i < p.layout.size(); ++i) {
    const auto& t = p.layout[i];
    if (t.cols == 1 && t.name.find("_b") != std::string::npos) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    auto m = p.tensor(i);
    for (Eigen::Index c = 0; c < t.cols; ++c) {
      for (Eigen::Index r = 0; r < t.rows; ++r) m(r, c) = limit * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return p;
}

Eigen::Map<Eigen::MatrixXd> DcnParams::tensor(std::size_t i) {
  const auto& t = layout.at(i);
  return {flat.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<const Eigen::MatrixXd> DcnParams::tensor(std::size_t i) const {
  const auto& t = layout.at(i);
  return {flat.data() + t.offset, t.rows, t.cols};
}

namespace {

void fill_input(const DcnConfig& config, const TrainExample& ex, double* out) {
  if (static_cast<std::size_t>(ex.content.size()) != config.content_dim) {
    throw ArgumentError("content vector has length " + std::to_string(ex.content.size()) +
                        ", expected " + std::to_string(config.content_dim));
  }
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < ex.content.size(); ++i) out[pos++] = ex.content[i];
  if (config.use_group) {
    for (double g : ex.group) out[pos++] = g;
  }
  if (config.use_person) {
    if (ex.worker_index >= config.n_workers) {
      throw ArgumentError("worker index " + std::to_string(ex.worker_index) + " out of range");
    }
    std::fill(out + pos, out + pos + config.n_workers, 0.0);
    out[pos + ex.worker_index] = 1.0;
  }
}

struct Tape {
  Eigen::MatrixXd X0;
  std::vector<Eigen::MatrixXd> X;  // X[l] is the input of cross layer l; X[L] its output
  std::vector<Eigen::MatrixXd> H;  // H[k] = ReLU(Z_k)
  Eigen::RowVectorXd logits;
};

void check_finite(const Eigen::MatrixXd& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericError("non-finite activation in layer " + layer);
}

void run_forward(const DcnConfig& config, const DcnParams& params, Tape& tape) {
  const std::size_t L = config.cross_layers;
  tape.X.resize(L + 1);
  tape.X[0] = tape.X0;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd U = params.tensor(params.cross_W(l)) * tape.X[l];
    U.colwise() += params.tensor(params.cross_b(l)).col(0);
    tape.X[l + 1] = tape.X0.cwiseProduct(U) + tape.X[l];
    check_finite(tape.X[l + 1], "cross_" + std::to_string(l));
  }
  const std::size_t K = config.deep_widths.size();
  tape.H.resize(K);
  const Eigen::MatrixXd* in = &tape.X[L];
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::MatrixXd Z = params.tensor(params.deep_W(L, k)) * (*in);
    Z.colwise() += params.tensor(params.deep_b(L, k)).col(0);
    tape.H[k] = Z.cwiseMax(0.0);
    check_finite(tape.H[k], "deep_" + std::to_string(k));
    in = &tape.H[k];
  }
  tape.logits = params.tensor(params.out_w()) * (*in);
  tape.logits.array() += params.tensor(params.out_b())(0, 0);
  if (!tape.logits.allFinite()) throw NumericError("non-finite activation in layer output");
}

}  // namespace

Eigen::VectorXd build_input(const DcnConfig& config, const TrainExample& example) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(config.input_dim()));
  fill_input(config, example, x.data());
  return x;
}

Eigen::MatrixXd build_inputs(const DcnConfig& config, std::span<const TrainExample* const> batch) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(config.input_dim()),
                    static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    fill_input(config, *batch[j], X.col(static_cast<Eigen::Index>(j)).data());
  }
  return X;
}

Eigen::RowVectorXd forward(const DcnConfig& config, const DcnParams& params,
                           const Eigen::MatrixXd& X0) {
  if (static_cast<std::size_t>(X0.rows()) != config.input_dim()) {
    throw ArgumentError("input has " + std::to_string(X0.rows()) + " rows, expected " +
                        std::to_string(config.input_dim()));
  }
  Tape tape;
  tape.X0 = X0;
  run_forward(config, params, tape);
  return tape.logits;
}

double forward_one(const DcnConfig& config, const DcnParams& params, const Eigen::VectorXd& x0) {
  return forward(config, params, x0)(0);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, int label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

LossAndGrad loss_and_grad(const DcnConfig& config, const DcnParams& params,
                          std::span<const TrainExample* const> batch) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  const std::size_t L = config.cross_layers;
  const std::size_t K = config.deep_widths.size();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Tape tape;
  tape.X0 = build_inputs(config, batch);
  run_forward(config, params, tape);

  LossAndGrad out;
  out.grad.layout = params.layout;
  out.grad.flat = Eigen::VectorXd::Zero(params.flat.size());
  auto& g = out.grad;

  Eigen::RowVectorXd dlogit(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double z = tape.logits(static_cast<Eigen::Index>(j));
    const int y = batch[j]->label;
    out.loss += bce_with_logit(z, y);
    dlogit(static_cast<Eigen::Index>(j)) = (sigmoid(z) - y) * inv_b;
  }
  out.loss *= inv_b;

  const Eigen::MatrixXd& top = K > 0 ? tape.H[K - 1] : tape.X[L];
  g.tensor(g.out_w()).noalias() = dlogit * top.transpose();
  g.tensor(g.out_b())(0, 0) = dlogit.sum();
  Eigen::MatrixXd dH = params.tensor(params.out_w()).transpose() * dlogit;

  for (std::size_t k = K; k-- > 0;) {
    const Eigen::MatrixXd& below = k > 0 ? tape.H[k - 1] : tape.X[L];
    // ReLU mask: H > 0 exactly where Z > 0.
    Eigen::MatrixXd dZ = (tape.H[k].array() > 0.0).select(dH, 0.0);
    g.tensor(g.deep_W(L, k)).noalias() = dZ * below.transpose();
    g.tensor(g.deep_b(L, k)).col(0) = dZ.rowwise().sum();
    dH.noalias() = params.tensor(params.deep_W(L, k)).transpose() * dZ;
  }

  Eigen::MatrixXd G = std::move(dH);  // dL/dX[L]
  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd A = G.cwiseProduct(tape.X0);
    g.tensor(g.cross_W(l)).noalias() = A * tape.X[l].transpose();
    g.tensor(g.cross_b(l)).col(0) = A.rowwise().sum();
    if (l > 0) G.noalias() += params.tensor(params.cross_W(l)).transpose() * A;
  }
  return out;
}

LossAndGrad loss_and_grad(const DcnConfig& config, const DcnParams& params,
                          std::span<const TrainExample> batch) {
  std::vector<const TrainExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& e : batch) ptrs.push_back(&e);
  return loss_and_grad(config, params, std::span<const TrainExample* const>(ptrs));
}

Adam::Adam(const AdamConfig& config, double lr, Eigen::Index size)
    : config_(config), lr_(lr), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.eps);
}

TrainResult train_dcn(const DcnConfig& config, std::span<const TrainExample> examples,
                      const EpochCallback& on_epoch) {
  config.validate();
  if (examples.empty()) throw ArgumentError("train_dcn: no training examples");
  for (const auto& e : examples) {
    if (config.use_person && e.worker_index >= config.n_workers) {
      throw ConsistencyError("training example names worker index " +
                             std::to_string(e.worker_index) + " outside the person embedding");
    }
    if (e.label != 0 && e.label != 1) throw ArgumentError("training label must be 0 or 1");
  }
  TrainResult result;
  result.params = DcnParams::glorot(config, config.seed);
  Adam adam(config.adam, config.lr, result.params.flat.size());
  SplitMix64 rng(derive_seed(config.seed, "dcn_shuffle"));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const TrainExample*> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(rng, order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[order[i]]);
      auto lg = loss_and_grad(config, result.params, batch);
      total += lg.loss * static_cast<double>(batch.size());
      adam.step(result.params.flat, lg.grad.flat);
    }
    EpochLog entry{epoch, epoch <= config.joint_epochs ? "joint" : "frozen",
                   total / static_cast<double>(examples.size())};
    if (on_epoch) on_epoch(entry);
    result.log.push_back(std::move(entry));
  }
  result.params.flat = result.params.flat.cast<float>().cast<double>();
  return result;
}

void write_training_log(std::ostream& out, std::span<const EpochLog> log) {
  csv::Writer w(out);
  w.row({"epoch", "phase", "mean_loss"});
  for (const auto& e : log) {
    w.field(e.epoch).field(std::string_view(e.phase)).field(e.mean_loss);
    w.end_row();
  }
}

std::size_t DcnModel::worker_index(const std::string& worker_id) const {
  auto it = index_.find(worker_id);
  if (it == index_.end()) {
    throw ArgumentError("worker not in person embedding: '" + worker_id + "'");
  }
  return it->second;
}

void DcnModel::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < workers.size(); ++i) {
    if (!index_.emplace(workers[i].worker_id, i).second) {
      throw ConsistencyError("duplicate worker '" + workers[i].worker_id + "' in model roster");
    }
  }
}

double predict_annotation(const DcnModel& model, const Eigen::VectorXd& content,
                          const std::string& worker_id) {
  return predict_annotation(model, content, model.worker_index(worker_id));
}

double predict_annotation(const DcnModel& model, const Eigen::VectorXd& content,
                          std::size_t worker_index) {
  if (worker_index >= model.workers.size()) {
    throw ArgumentError("worker not in person embedding: index " + std::to_string(worker_index));
  }
  TrainExample ex;
  ex.content = content;
  ex.group = model.workers[worker_index].group;
  ex.worker_index = worker_index;
  return sigmoid(forward_one(model.config, model.params, build_input(model.config, ex)));
}

Eigen::VectorXd predict_all_workers(const DcnModel& model, const Eigen::VectorXd& content) {
  const std::size_t n = model.workers.size();
  std::vector<TrainExample> exs(n);
  std::vector<const TrainExample*> ptrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    exs[i].content = content;
    exs[i].group = model.workers[i].group;
    exs[i].worker_index = i;
    ptrs[i] = &exs[i];
  }
  const Eigen::RowVectorXd logits =
      forward(model.config, model.params, build_inputs(model.config, ptrs));
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

namespace {

nlohmann::ordered_json config_json(const DcnConfig& c) {
  nlohmann::ordered_json j;
  j["content_dim"] = c.content_dim;
  j["group_dim"] = c.group_dim();
  j["n_workers"] = c.n_workers;
  j["use_group"] = c.use_group;
  j["use_person"] = c.use_person;
  j["cross_layers"] = c.cross_layers;
  j["deep_widths"] = c.deep_widths;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["joint_epochs"] = c.joint_epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  return j;
}

DcnConfig config_from_json(const nlohmann::json& j) {
  DcnConfig c;
  c.content_dim = j.at("content_dim").get<std::size_t>();
  c.n_workers = j.at("n_workers").get<std::size_t>();
  c.use_group = j.at("use_group").get<bool>();
  c.use_person = j.at("use_person").get<bool>();
  c.cross_layers = j.at("cross_layers").get<std::size_t>();
  c.deep_widths = j.at("deep_widths").get<std::vector<std::size_t>>();
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.joint_epochs = j.at("joint_epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam.beta1 = j.at("adam").at("beta1").get<double>();
  c.adam.beta2 = j.at("adam").at("beta2").get<double>();
  c.adam.eps = j.at("adam").at("eps").get<double>();
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const DcnModel& model) {
  nlohmann::ordered_json meta;
  meta["format"] = kCheckpointMagic;
  meta["config"] = config_json(model.config);
  meta["scaler"] = {{"age_mean", model.scaler.age_mean},
                    {"age_sd", model.scaler.age_sd},
                    {"days_mean", model.scaler.days_mean},
                    {"days_sd", model.scaler.days_sd}};
  auto workers = nlohmann::ordered_json::array();
  for (const auto& w : model.workers) {
    workers.push_back({{"worker_id", w.worker_id}, {"group", w.group}});
  }
  meta["workers"] = workers;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : model.params.layout) {
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  meta["tensors"] = tensors;
  meta["dtype"] = "float32le";
  meta["metadata"] = model.metadata;
  const std::string text = meta.dump();

  out.write(kCheckpointMagic, 8);
  std::uint64_t len = text.size();
  std::array<char, 8> len_bytes{};
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>((len >> (8 * i)) & 0xffu);
  out.write(len_bytes.data(), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> values(static_cast<std::size_t>(model.params.flat.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<float>(model.params.flat[static_cast<Eigen::Index>(i)]);
  }
  const auto bytes = pack_f32le(values);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint");
}

DcnModel read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || std::string_view(magic.data(), 8) != kCheckpointMagic) {
    throw FormatError("checkpoint: bad magic (expected DCNCKPT1)");
  }
  std::array<unsigned char, 8> len_bytes{};
  if (!in.read(reinterpret_cast<char*>(len_bytes.data()), 8)) {
    throw FormatError("checkpoint: truncated header");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  if (len > (1ull << 32)) throw FormatError("checkpoint: metadata block too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw FormatError("checkpoint: truncated metadata");
  }
  nlohmann::json meta;
  DcnModel model;
  try {
    meta = nlohmann::json::parse(text);
    model.config = config_from_json(meta.at("config"));
    const auto& s = meta.at("scaler");
    model.scaler = {s.at("age_mean").get<double>(), s.at("age_sd").get<double>(),
                    s.at("days_mean").get<double>(), s.at("days_sd").get<double>()};
    for (const auto& w : meta.at("workers")) {
      model.workers.push_back({w.at("worker_id").get<std::string>(),
                               w.at("group").get<std::array<double, kGroupDim>>()});
    }
    model.metadata = meta.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  model.params = DcnParams::zeros(model.config);
  const auto& tensors = meta.at("tensors");
  if (tensors.size() != model.params.layout.size()) {
    throw FormatError("checkpoint: tensor list does not match config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = model.params.layout[i];
    if (tensors[i].at("name").get<std::string>() != t.name ||
        tensors[i].at("rows").get<Eigen::Index>() != t.rows ||
        tensors[i].at("cols").get<Eigen::Index>() != t.cols) {
      throw FormatError("checkpoint: tensor '" + t.name + "' shape mismatch");
    }
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(model.params.flat.size()) * 4);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError("checkpoint: truncated tensor data");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  const auto values = unpack_f32le(bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    model.params.flat[static_cast<Eigen::Index>(i)] = values[i];
  }
  if (!model.params.flat.allFinite()) throw FormatError("checkpoint: non-finite parameter");
  if (model.config.use_person && model.workers.size() != model.config.n_workers) {
    throw FormatError("checkpoint: roster size does not match person embedding");
  }
  model.reindex();
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const DcnModel& model) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, model);
  write_text_file(path, out.str());
}

DcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace stigma::model
