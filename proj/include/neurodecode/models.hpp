#pragma once

#include "neurodecode/autodiff/gradcheck.hpp"
#include "neurodecode/autodiff/ops.hpp"
#include "neurodecode/random.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace neurodecode::models {

enum class Arch { eegnet, lstm, dgcnn, transformer, conformer };
enum class Size { small, medium, large };

inline constexpr Arch kArchs[] = {Arch::eegnet, Arch::lstm, Arch::dgcnn, Arch::transformer, Arch::conformer};
inline constexpr Size kSizes[] = {Size::small, Size::medium, Size::large};

const char* to_string(Arch a);
const char* to_string(Size s);
Arch arch_from_string(std::string_view s);
Size size_from_string(std::string_view s);

// Integer hyperparameters keyed by name. Required keys per arch:
//   eegnet: F1 D F2 kernel1 kernel2 pool1 pool2
//   lstm: hidden layers
//   dgcnn: K hidden layers
//   transformer: d_model heads layers ffn
//   conformer: filters d_model heads layers kernel pool head
using Hyperparams = std::map<std::string, int>;

Hyperparams default_hyperparams(Arch arch, Size size);

// Dropout by size tier: 0.25 / 0.5 / 0.75.
double default_dropout(Size size);

struct ModelSpec {
  Arch arch = Arch::eegnet;
  Size size = Size::small;
  double dropout = 0.25;
  Hyperparams hyper;
  int n_classes = 2;
  std::size_t n_channels = 63;
  std::size_t n_samples = 50;

  static ModelSpec make(Arch arch, Size size, int n_classes = 2);

  // Throws ConfigError on an unsupported dropout, missing hyperparameters or
  // an input too short for the architecture.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);

  bool operator==(const ModelSpec&) const = default;
};

// Trainable tensors in a ParamStore plus batch-norm running statistics.
// forward() maps a [B, channels, samples] batch to [B, n_classes] logits.
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  ad::ParamStore<T>& params() noexcept { return params_; }
  const ad::ParamStore<T>& params() const noexcept { return params_; }
  std::vector<ad::BatchNormState<T>>& batch_norms() noexcept { return bn_; }
  const std::vector<ad::BatchNormState<T>>& batch_norms() const noexcept { return bn_; }

  // `tape` must be bound to params(). Training mode uses batch statistics in
  // batch norm; dropout is active only in training mode with an `rng`.
  ad::Var<T> forward(ad::Tape<T>& tape, const ad::Tensor<T>& batch, bool training, Rng* rng = nullptr);

  std::size_t count_params() const { return params_.count(); }

  // Pins the graph spectral radius to its value at the current adjacency
  // (dgcnn only; returns nullopt for other archs). Used by gradient checks so
  // the finite-difference probes see the same constant as the backward pass.
  std::optional<double> freeze_spectral_radius();
  void pin_spectral_radius(std::optional<double> lambda) { graph_.lambda_max = lambda; }
  std::optional<double> pinned_spectral_radius() const { return graph_.lambda_max; }

 private:
  std::size_t add(const std::string& name, ad::Shape shape, double fan_in, Rng& rng);
  std::size_t add_constant(const std::string& name, ad::Shape shape, T value);
  ad::BatchNormState<T>& add_bn(const std::string& name, std::size_t features, Rng& rng);
  ad::Var<T> p(ad::Tape<T>& tape, const std::string& name) const;
  ad::BatchNormState<T>& bn(const std::string& name);
  ad::Var<T> norm(ad::Tape<T>& tape, const ad::Var<T>& x, const std::string& name, bool training);
  ad::Var<T> layer_norm(ad::Tape<T>& tape, const ad::Var<T>& x, const std::string& name) const;
  ad::Var<T> attention_block(ad::Tape<T>& tape, const ad::Var<T>& x, const std::string& name) const;

  void build_eegnet(Rng& rng);
  void build_lstm(Rng& rng);
  void build_dgcnn(Rng& rng);
  void build_transformer(Rng& rng);
  void build_conformer(Rng& rng);
  void build_encoder_layer(const std::string& name, std::size_t d, std::size_t ffn, Rng& rng);

  ad::Var<T> forward_eegnet(ad::Tape<T>& tape, ad::Var<T> x, bool training, Rng* rng);
  ad::Var<T> forward_lstm(ad::Tape<T>& tape, ad::Var<T> x, bool training, Rng* rng);
  ad::Var<T> forward_dgcnn(ad::Tape<T>& tape, ad::Var<T> x, bool training, Rng* rng);
  ad::Var<T> forward_transformer(ad::Tape<T>& tape, ad::Var<T> x, bool training, Rng* rng);
  ad::Var<T> forward_conformer(ad::Tape<T>& tape, ad::Var<T> x, bool training, Rng* rng);

  int h(const char* key) const { return spec_.hyper.at(key); }

  ModelSpec spec_;
  ad::ParamStore<T> params_;
  std::vector<ad::BatchNormState<T>> bn_;
  std::unordered_map<std::string, std::size_t> index_;
  ad::GraphConvOptions graph_;
};

extern template class Model<float>;
extern template class Model<double>;
extern template class Model<long double>;

// Same architecture and values in another precision.
template <typename To, typename From>
Model<To> convert(const Model<From>& model);

// Finite-difference check of the end-to-end loss gradient: analytic pass in
// double precision, central differences evaluated in long double on the same
// parameter values. Batch norm in training mode, dropout off, spectral radius
// pinned.
struct ModelGradCheck {
  Arch arch;
  Size size;
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;
  ad::GradCheckEntry worst;
  double seconds = 0.0;
  std::size_t refined = 0;  // probes repeated in long double
};

ModelGradCheck model_grad_check(Arch arch, Size size, const ad::GradCheckOptions& opts, std::size_t batch = 4);

// --- parameter audit -------------------------------------------------------

// Reference trainable-parameter counts per architecture and size.
std::int64_t target_param_count(Arch arch, Size size);

struct AuditRow {
  Arch arch;
  Size size;
  std::int64_t target = 0;
  std::int64_t actual = 0;
  double ratio = 0.0;  // actual / target
  bool within_budget = false;  // |ratio - 1| <= 0.3
};

struct AuditReport {
  std::vector<AuditRow> rows;
  int within_budget = 0;
  bool ordering_ok = true;  // small < medium < large for every arch
};

AuditReport audit_params(double tolerance = 0.3);

// --- checkpoints -----------------------------------------------------------
//
// "EEGM" | u32 version=1 | string descriptor (ModelSpec JSON) | u32 n_tensors |
// per tensor: string name | u32 rank | u64 dims[rank] | float32 values.
// Batch-norm running statistics are stored as "<layer>.running_mean/var".

inline constexpr char kCheckpointMagic[4] = {'E', 'E', 'G', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace neurodecode::models
