#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace stigma::model {

inline constexpr std::size_t kGroupDim = 5;
inline constexpr const char* kCheckpointMagic = "DCNCKPT1";

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct DcnConfig {
  std::size_t content_dim = 0;
  std::size_t n_workers = 0;
  // Ablation switches for the group and person blocks of the input.
  bool use_group = true;
  bool use_person = true;
  std::size_t cross_layers = 3;
  std::vector<std::size_t> deep_widths{768, 768, 768};
  double lr = 1e-5;
  std::size_t epochs = 20;
  // Epochs logged as the "joint" phase; the rest are "frozen".
  std::size_t joint_epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig adam;

  std::size_t group_dim() const { return use_group ? kGroupDim : 0; }
  std::size_t person_dim() const { return use_person ? n_workers : 0; }
  std::size_t input_dim() const { return content_dim + group_dim() + person_dim(); }
  // Throws ArgumentError.
  void validate() const;
};

struct TrainExample {
  Eigen::VectorXd content;
  // age_z, gender_female, race_african_american, knows_treated_person,
  // substance_use_days_z
  std::array<double, kGroupDim> group{};
  std::size_t worker_index = 0;
  int label = 0;
};

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  Eigen::Index size() const { return rows * cols; }
};

// Tensor order: cross_W0, cross_b0, ..., deep_W0, deep_b0, ..., out_w, out_b.
// W matrices are (out x in), column-major inside the flat buffer.
std::vector<TensorSpec> parameter_layout(const DcnConfig& config);

/// All trainable parameters in one flat buffer; gradients use the same type.
struct DcnParams {
  std::vector<TensorSpec> layout;
  Eigen::VectorXd flat;

  static DcnParams zeros(const DcnConfig& config);
  // Glorot uniform weights, zero biases, seeded.
  static DcnParams glorot(const DcnConfig& config, std::uint64_t seed);

  Eigen::Map<Eigen::MatrixXd> tensor(std::size_t i);
  Eigen::Map<const Eigen::MatrixXd> tensor(std::size_t i) const;
  std::size_t cross_W(std::size_t l) const { return 2 * l; }
  std::size_t cross_b(std::size_t l) const { return 2 * l + 1; }
  std::size_t deep_W(std::size_t cross_layers, std::size_t k) const {
    return 2 * cross_layers + 2 * k;
  }
  std::size_t deep_b(std::size_t cross_layers, std::size_t k) const {
    return 2 * cross_layers + 2 * k + 1;
  }
  std::size_t out_w() const { return layout.size() - 2; }
  std::size_t out_b() const { return layout.size() - 1; }
};

// x0 = content ++ group ++ one_hot(worker), with disabled blocks omitted.
Eigen::VectorXd build_input(const DcnConfig& config, const TrainExample& example);

// Columns of the result are the inputs of `batch`.
Eigen::MatrixXd build_inputs(const DcnConfig& config, std::span<const TrainExample* const> batch);

/// Logits for a batch of inputs (columns of X0). Throws NumericError naming
/// the layer on a non-finite activation.
Eigen::RowVectorXd forward(const DcnConfig& config, const DcnParams& params,
                           const Eigen::MatrixXd& X0);

double forward_one(const DcnConfig& config, const DcnParams& params, const Eigen::VectorXd& x0);

struct LossAndGrad {
  double loss = 0.0;  // mean binary cross-entropy
  DcnParams grad;
};

LossAndGrad loss_and_grad(const DcnConfig& config, const DcnParams& params,
                          std::span<const TrainExample* const> batch);
LossAndGrad loss_and_grad(const DcnConfig& config, const DcnParams& params,
                          std::span<const TrainExample> batch);

// Numerically stable per-example cross-entropy on a logit.
double bce_with_logit(double logit, int label);
double sigmoid(double z);

class Adam {
 public:
  Adam(const AdamConfig& config, double lr, Eigen::Index size);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  double lr_;
  Eigen::VectorXd m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::string phase;      // "joint" or "frozen"
  double mean_loss = 0.0;
};

struct TrainResult {
  DcnParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam over shuffled mini-batches, single-threaded and deterministic per
/// config.seed. The optimizer state carries across the phase boundary.
/// Final parameters are rounded to float32 so that a saved checkpoint and
/// the in-memory model agree exactly.
TrainResult train_dcn(const DcnConfig& config, std::span<const TrainExample> examples,
                      const EpochCallback& on_epoch = {});

void write_training_log(std::ostream& out, std::span<const EpochLog> log);

// Group block statistics, fitted on training workers.
struct GroupScaler {
  double age_mean = 0.0, age_sd = 0.0;
  double days_mean = 0.0, days_sd = 0.0;
};

struct WorkerEntry {
  std::string worker_id;
  std::array<double, kGroupDim> group{};
};

/// A trained annotator model: configuration, parameters and the roster of
/// workers in person-embedding order.
struct DcnModel {
  DcnConfig config;
  DcnParams params;
  GroupScaler scaler;
  std::vector<WorkerEntry> workers;
  // Free-form provenance (e.g. feature file hashes), stored in checkpoints.
  std::map<std::string, std::string> metadata;

  // Throws ArgumentError "worker not in person embedding" for unknown ids.
  std::size_t worker_index(const std::string& worker_id) const;
  void reindex();

 private:
  std::map<std::string, std::size_t> index_;
};

double predict_annotation(const DcnModel& model, const Eigen::VectorXd& content,
                          const std::string& worker_id);
double predict_annotation(const DcnModel& model, const Eigen::VectorXd& content,
                          std::size_t worker_index);
// Probabilities for every roster worker on one comment, in roster order.
Eigen::VectorXd predict_all_workers(const DcnModel& model, const Eigen::VectorXd& content);

void save_checkpoint(const std::filesystem::path& path, const DcnModel& model);
DcnModel load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const DcnModel& model);
DcnModel read_checkpoint(std::istream& in);

}  // namespace stigma::model
