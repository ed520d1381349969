#include "neurodecode/models.hpp"

#include "binary_io.hpp"
#include "neurodecode/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace neurodecode::models {

using ad::Padding;
using ad::Shape;
using ad::Tensor;
using ad::Var;

const char* to_string(Arch a) {
  switch (a) {
    case Arch::eegnet: return "eegnet";
    case Arch::lstm: return "lstm";
    case Arch::dgcnn: return "dgcnn";
    case Arch::transformer: return "transformer";
    case Arch::conformer: return "conformer";
  }
  return "?";
}

const char* to_string(Size s) {
  switch (s) {
    case Size::small: return "small";
    case Size::medium: return "medium";
    case Size::large: return "large";
  }
  return "?";
}

Arch arch_from_string(std::string_view s) {
  for (Arch a : kArchs) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(s) +
                    "' (expected eegnet, lstm, dgcnn, transformer or conformer)");
}

Size size_from_string(std::string_view s) {
  for (Size z : kSizes) {
    if (s == to_string(z)) return z;
  }
  throw ConfigError("unknown model size '" + std::string(s) + "' (expected small, medium or large)");
}

Hyperparams default_hyperparams(Arch arch, Size size) {
  const int i = static_cast<int>(size);
  switch (arch) {
    case Arch::eegnet: {
      const int f1[] = {8, 16, 32}, d[] = {2, 4, 8}, f2[] = {16, 64, 384};
      return {{"F1", f1[i]}, {"D", d[i]}, {"F2", f2[i]}, {"kernel1", 25}, {"kernel2", 16}, {"pool1", 4}, {"pool2", 8}};
    }
    case Arch::lstm: {
      const int hidden[] = {13, 80, 224}, layers[] = {1, 2, 3};
      return {{"hidden", hidden[i]}, {"layers", layers[i]}};
    }
    case Arch::dgcnn: {
      const int k[] = {2, 2, 3}, hidden[] = {48, 160, 512}, layers[] = {1, 2, 2};
      return {{"K", k[i]}, {"hidden", hidden[i]}, {"layers", layers[i]}};
    }
    case Arch::transformer: {
      const int d[] = {16, 64, 128}, heads[] = {2, 4, 8}, layers[] = {1, 3, 5}, ffn[] = {32, 256, 512};
      return {{"d_model", d[i]}, {"heads", heads[i]}, {"layers", layers[i]}, {"ffn", ffn[i]}};
    }
    case Arch::conformer: {
      const int filters[] = {10, 40, 40}, d[] = {10, 40, 40}, heads[] = {2, 4, 4}, layers[] = {1, 2, 6},
                head[] = {512, 128, 5120};
      return {{"filters", filters[i]}, {"d_model", d[i]}, {"heads", heads[i]}, {"layers", layers[i]},
              {"kernel", 25},          {"pool", 5},       {"head", head[i]}};
    }
  }
  throw ConfigError("unknown architecture");
}

double default_dropout(Size size) {
  const double rates[] = {0.25, 0.5, 0.75};
  return rates[static_cast<int>(size)];
}

ModelSpec ModelSpec::make(Arch arch, Size size, int n_classes) {
  ModelSpec s;
  s.arch = arch;
  s.size = size;
  s.dropout = default_dropout(size);
  s.hyper = default_hyperparams(arch, size);
  s.n_classes = n_classes;
  return s;
}

void ModelSpec::validate() const {
  if (dropout != 0.25 && dropout != 0.5 && dropout != 0.75) {
    throw ConfigError("dropout must be 0.25, 0.5 or 0.75, got " + std::to_string(dropout));
  }
  if (n_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (n_channels == 0 || n_samples == 0) throw ConfigError("empty input shape");
  const auto required = default_hyperparams(arch, Size::small);
  for (const auto& [key, unused] : required) {
    auto it = hyper.find(key);
    if (it == hyper.end()) {
      throw ConfigError(std::string(to_string(arch)) + " needs hyperparameter '" + key + "'");
    }
    if (it->second <= 0) throw ConfigError("hyperparameter '" + key + "' must be positive");
  }
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  switch (arch) {
    case Arch::eegnet:
      need(n_samples / static_cast<std::size_t>(hyper.at("pool1")) / static_cast<std::size_t>(hyper.at("pool2")) > 0,
           "input too short for the eegnet pooling stages");
      break;
    case Arch::dgcnn:
      need(hyper.at("layers") <= 2, "dgcnn supports one or two graph convolutions");
      break;
    case Arch::transformer:
      need(hyper.at("d_model") % hyper.at("heads") == 0, "d_model must be divisible by heads");
      break;
    case Arch::conformer:
      need(hyper.at("d_model") % hyper.at("heads") == 0, "d_model must be divisible by heads");
      need(n_samples >= static_cast<std::size_t>(hyper.at("kernel")) &&
               (n_samples - static_cast<std::size_t>(hyper.at("kernel")) + 1) / static_cast<std::size_t>(hyper.at("pool")) > 0,
           "input too short for the conformer stem");
      break;
    case Arch::lstm:
      break;
  }
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json hp = nlohmann::json::object();
  for (const auto& [k, v] : hyper) hp[k] = v;
  return {{"arch", to_string(arch)},   {"size", to_string(size)},         {"dropout", dropout},
          {"hyperparams", hp},         {"n_classes", n_classes},          {"n_channels", n_channels},
          {"n_samples", n_samples}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.arch = arch_from_string(j.at("arch").get<std::string>());
    s.size = size_from_string(j.at("size").get<std::string>());
    s.dropout = j.value("dropout", default_dropout(s.size));
    s.hyper = default_hyperparams(s.arch, s.size);
    if (j.contains("hyperparams")) {
      for (const auto& [k, v] : j.at("hyperparams").items()) s.hyper[k] = v.get<int>();
    }
    s.n_classes = j.value("n_classes", 2);
    s.n_channels = j.value("n_channels", std::size_t{63});
    s.n_samples = j.value("n_samples", std::size_t{50});
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model spec: ") + e.what());
  }
}

// --- model ----------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  switch (spec_.arch) {
    case Arch::eegnet: build_eegnet(rng); break;
    case Arch::lstm: build_lstm(rng); break;
    case Arch::dgcnn: build_dgcnn(rng); break;
    case Arch::transformer: build_transformer(rng); break;
    case Arch::conformer: build_conformer(rng); break;
  }
}

template <typename T>
std::size_t Model<T>::add(const std::string& name, Shape shape, double fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / fan_in);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  const auto i = params_.add(name, std::move(t));
  index_[name] = i;
  return i;
}

template <typename T>
std::size_t Model<T>::add_constant(const std::string& name, Shape shape, T value) {
  const auto i = params_.add(name, Tensor<T>(std::move(shape), value));
  index_[name] = i;
  return i;
}

template <typename T>
ad::BatchNormState<T>& Model<T>::add_bn(const std::string& name, std::size_t features, Rng&) {
  add_constant(name + ".gamma", {features}, T{1});
  add_constant(name + ".beta", {features}, T{0});
  bn_.push_back({name, Tensor<T>({features}, T{0}), Tensor<T>({features}, T{1})});
  return bn_.back();
}

template <typename T>
Var<T> Model<T>::p(ad::Tape<T>& tape, const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("model has no parameter '" + name + "'");
  return tape.param(it->second);
}

template <typename T>
ad::BatchNormState<T>& Model<T>::bn(const std::string& name) {
  for (auto& s : bn_) {
    if (s.name == name) return s;
  }
  throw Error("model has no batch norm '" + name + "'");
}

template <typename T>
Var<T> Model<T>::norm(ad::Tape<T>& tape, const Var<T>& x, const std::string& name, bool training) {
  return ad::batch_norm(x, p(tape, name + ".gamma"), p(tape, name + ".beta"), bn(name), training);
}

template <typename T>
Var<T> Model<T>::layer_norm(ad::Tape<T>& tape, const Var<T>& x, const std::string& name) const {
  return ad::layer_norm(x, p(tape, name + ".gamma"), p(tape, name + ".beta"));
}

template <typename T>
Var<T> Model<T>::attention_block(ad::Tape<T>& tape, const Var<T>& x, const std::string& name) const {
  ad::AttentionWeights<T> w{p(tape, name + ".wq"), p(tape, name + ".bq"), p(tape, name + ".wk"), p(tape, name + ".bk"),
                            p(tape, name + ".wv"), p(tape, name + ".bv"), p(tape, name + ".wo"), p(tape, name + ".bo")};
  return ad::multi_head_attention(x, w, static_cast<std::size_t>(h("heads")));
}

template <typename T>
void Model<T>::build_encoder_layer(const std::string& name, std::size_t d, std::size_t ffn, Rng& rng) {
  for (const char* m : {"q", "k", "v", "o"}) {
    add(name + ".attn.w" + m, {d, d}, static_cast<double>(d), rng);
    add(name + ".attn.b" + m, {d}, static_cast<double>(d), rng);
  }
  for (const char* ln : {".ln1", ".ln2"}) {
    add_constant(name + ln + ".gamma", {d}, T{1});
    add_constant(name + ln + ".beta", {d}, T{0});
  }
  add(name + ".ffn1.w", {d, ffn}, static_cast<double>(d), rng);
  add(name + ".ffn1.b", {ffn}, static_cast<double>(d), rng);
  add(name + ".ffn2.w", {ffn, d}, static_cast<double>(ffn), rng);
  add(name + ".ffn2.b", {d}, static_cast<double>(ffn), rng);
}

// --- eegnet ----------------------------------------------------------------

template <typename T>
void Model<T>::build_eegnet(Rng& rng) {
  const std::size_t f1 = h("F1"), fd = f1 * h("D"), f2 = h("F2"), k1 = h("kernel1"), k2 = h("kernel2");
  const std::size_t flat = f2 * (spec_.n_samples / h("pool1") / h("pool2"));
  add("temporal.w", {f1, 1, k1}, static_cast<double>(k1), rng);
  add_bn("bn1", f1, rng);
  add("spatial.w", {fd, 1, spec_.n_channels}, static_cast<double>(spec_.n_channels), rng);
  add_bn("bn2", fd, rng);
  add("separable.depthwise", {fd, 1, k2}, static_cast<double>(k2), rng);
  add("separable.pointwise", {f2, fd, 1}, static_cast<double>(fd), rng);
  add_bn("bn3", f2, rng);
  add("out.w", {flat, static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(flat), rng);
  add("out.b", {static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(flat), rng);
}

template <typename T>
Var<T> Model<T>::forward_eegnet(ad::Tape<T>& tape, Var<T> x, bool training, Rng* rng) {
  const std::size_t B = x.dim(0);
  x = ad::reshape(x, {B, 1, spec_.n_channels, spec_.n_samples});
  x = ad::conv_temporal(x, p(tape, "temporal.w"), std::optional<Var<T>>(), 1, Padding::same);
  x = norm(tape, x, "bn1", training);
  x = ad::conv_spatial_depthwise(x, p(tape, "spatial.w"));
  x = ad::elu(norm(tape, x, "bn2", training));
  x = ad::dropout(ad::avg_pool_time(x, h("pool1")), spec_.dropout, training && rng, rng);
  x = ad::separable_conv(x, p(tape, "separable.depthwise"), p(tape, "separable.pointwise"), Padding::same);
  x = ad::elu(norm(tape, x, "bn3", training));
  x = ad::dropout(ad::avg_pool_time(x, h("pool2")), spec_.dropout, training && rng, rng);
  x = ad::reshape(x, {B, x.value().size() / B});
  return ad::dense(x, p(tape, "out.w"), std::optional(p(tape, "out.b")));
}

// --- lstm ------------------------------------------------------------------

template <typename T>
void Model<T>::build_lstm(Rng& rng) {
  const std::size_t hid = h("hidden");
  std::size_t in = spec_.n_channels;
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "lstm" + std::to_string(l);
    add(name + ".wih", {in, 4 * hid}, static_cast<double>(in), rng);
    add(name + ".whh", {hid, 4 * hid}, static_cast<double>(hid), rng);
    add(name + ".b", {4 * hid}, static_cast<double>(hid), rng);
    in = hid;
  }
  add("out.w", {hid, static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(hid), rng);
  add("out.b", {static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(hid), rng);
}

template <typename T>
Var<T> Model<T>::forward_lstm(ad::Tape<T>& tape, Var<T> x, bool training, Rng* rng) {
  x = ad::transpose_last2(x);  // [B, samples, channels]
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "lstm" + std::to_string(l);
    if (l > 0) x = ad::dropout(x, spec_.dropout, training && rng, rng);
    x = ad::lstm_layer(x, p(tape, name + ".wih"), p(tape, name + ".whh"), p(tape, name + ".b"));
  }
  x = ad::dropout(ad::select_step(x, spec_.n_samples - 1), spec_.dropout, training && rng, rng);
  return ad::dense(x, p(tape, "out.w"), std::optional(p(tape, "out.b")));
}

// --- dgcnn -----------------------------------------------------------------

template <typename T>
void Model<T>::build_dgcnn(Rng& rng) {
  const std::size_t n = spec_.n_channels, K = h("K"), hid = h("hidden");
  Tensor<T> adj({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) adj[i * n + j] = i == j ? T{0} : static_cast<T>(rng.uniform(0.01, 0.05));
  }
  index_["adjacency"] = params_.add("adjacency", std::move(adj));
  std::size_t in = spec_.n_samples;
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "graph" + std::to_string(l);
    add(name + ".theta", {K, in, hid}, static_cast<double>(K * in), rng);
    add(name + ".b", {hid}, static_cast<double>(K * in), rng);
    in = hid;
  }
  add("node.w", {hid, hid}, static_cast<double>(hid), rng);
  add("node.b", {hid}, static_cast<double>(hid), rng);
  add("out.w", {hid, static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(hid), rng);
  add("out.b", {static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(hid), rng);
}

template <typename T>
Var<T> Model<T>::forward_dgcnn(ad::Tape<T>& tape, Var<T> x, bool training, Rng* rng) {
  const auto adj = p(tape, "adjacency");
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "graph" + std::to_string(l);
    x = ad::chebyshev_graph_conv(x, adj, p(tape, name + ".theta"), graph_);
    x = ad::relu(ad::add(x, p(tape, name + ".b")));
  }
  x = ad::relu(ad::dense(x, p(tape, "node.w"), std::optional(p(tape, "node.b"))));
  x = ad::dropout(ad::mean_axis(x, 1), spec_.dropout, training && rng, rng);
  return ad::dense(x, p(tape, "out.w"), std::optional(p(tape, "out.b")));
}

template <typename T>
std::optional<double> Model<T>::freeze_spectral_radius() {
  if (spec_.arch != Arch::dgcnn) return std::nullopt;
  graph_.lambda_max.reset();
  const auto& adj = params_[index_.at("adjacency")].value;
  graph_.lambda_max = ad::scaled_laplacian(adj, graph_).lambda_max;
  return graph_.lambda_max;
}

// --- transformer -----------------------------------------------------------

template <typename T>
void Model<T>::build_transformer(Rng& rng) {
  const std::size_t d = h("d_model");
  add("embed.w", {spec_.n_channels, d}, static_cast<double>(spec_.n_channels), rng);
  add("embed.b", {d}, static_cast<double>(spec_.n_channels), rng);
  for (int l = 0; l < h("layers"); ++l) build_encoder_layer("enc" + std::to_string(l), d, h("ffn"), rng);
  add("out.w", {d, static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(d), rng);
  add("out.b", {static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(d), rng);
}

template <typename T>
Var<T> Model<T>::forward_transformer(ad::Tape<T>& tape, Var<T> x, bool training, Rng* rng) {
  const std::size_t d = h("d_model");
  x = ad::dense(ad::transpose_last2(x), p(tape, "embed.w"), std::optional(p(tape, "embed.b")));
  x = ad::add(x, tape.constant(ad::sinusoidal_positions<T>(spec_.n_samples, d)));
  // Post-norm encoder layers with a relu feed-forward.
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "enc" + std::to_string(l);
    auto a = ad::dropout(attention_block(tape, x, name + ".attn"), spec_.dropout, training && rng, rng);
    x = layer_norm(tape, ad::add(x, a), name + ".ln1");
    auto f = ad::relu(ad::dense(x, p(tape, name + ".ffn1.w"), std::optional(p(tape, name + ".ffn1.b"))));
    f = ad::dense(f, p(tape, name + ".ffn2.w"), std::optional(p(tape, name + ".ffn2.b")));
    x = layer_norm(tape, ad::add(x, ad::dropout(f, spec_.dropout, training && rng, rng)), name + ".ln2");
  }
  x = ad::mean_axis(x, 1);
  return ad::dense(x, p(tape, "out.w"), std::optional(p(tape, "out.b")));
}

// --- conformer -------------------------------------------------------------

template <typename T>
void Model<T>::build_conformer(Rng& rng) {
  const std::size_t f = h("filters"), d = h("d_model"), k = h("kernel"), head = h("head");
  const std::size_t tokens = (spec_.n_samples - k + 1) / h("pool");
  add("temporal.w", {f, 1, k}, static_cast<double>(k), rng);
  add("temporal.b", {f}, static_cast<double>(k), rng);
  add("spatial.w", {f, f, spec_.n_channels}, static_cast<double>(f * spec_.n_channels), rng);
  add("spatial.b", {f}, static_cast<double>(f * spec_.n_channels), rng);
  add_bn("bn", f, rng);
  add("project.w", {f, d}, static_cast<double>(f), rng);
  add("project.b", {d}, static_cast<double>(f), rng);
  for (int l = 0; l < h("layers"); ++l) build_encoder_layer("enc" + std::to_string(l), d, 4 * d, rng);
  add("head.w", {tokens * d, head}, static_cast<double>(tokens * d), rng);
  add("head.b", {head}, static_cast<double>(tokens * d), rng);
  add("out.w", {head, static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(head), rng);
  add("out.b", {static_cast<std::size_t>(spec_.n_classes)}, static_cast<double>(head), rng);
}

template <typename T>
Var<T> Model<T>::forward_conformer(ad::Tape<T>& tape, Var<T> x, bool training, Rng* rng) {
  const std::size_t B = x.dim(0);
  x = ad::reshape(x, {B, 1, spec_.n_channels, spec_.n_samples});
  x = ad::conv_temporal(x, p(tape, "temporal.w"), std::optional(p(tape, "temporal.b")), 1, Padding::valid);
  x = ad::conv_spatial(x, p(tape, "spatial.w"), std::optional(p(tape, "spatial.b")), 1);
  x = ad::elu(norm(tape, x, "bn", training));
  x = ad::dropout(ad::avg_pool_time(x, h("pool")), spec_.dropout, training && rng, rng);
  const std::size_t f = x.dim(1), tokens = x.dim(3);
  x = ad::transpose_last2(ad::reshape(x, {B, f, tokens}));  // [B, tokens, filters]
  x = ad::dense(x, p(tape, "project.w"), std::optional(p(tape, "project.b")));
  // Pre-norm encoder layers with an elu feed-forward.
  for (int l = 0; l < h("layers"); ++l) {
    const std::string name = "enc" + std::to_string(l);
    auto a = attention_block(tape, layer_norm(tape, x, name + ".ln1"), name + ".attn");
    x = ad::add(x, ad::dropout(a, spec_.dropout, training && rng, rng));
    auto y = layer_norm(tape, x, name + ".ln2");
    y = ad::elu(ad::dense(y, p(tape, name + ".ffn1.w"), std::optional(p(tape, name + ".ffn1.b"))));
    y = ad::dense(y, p(tape, name + ".ffn2.w"), std::optional(p(tape, name + ".ffn2.b")));
    x = ad::add(x, ad::dropout(y, spec_.dropout, training && rng, rng));
  }
  x = ad::reshape(x, {B, x.value().size() / B});
  x = ad::elu(ad::dense(x, p(tape, "head.w"), std::optional(p(tape, "head.b"))));
  x = ad::dropout(x, spec_.dropout, training && rng, rng);
  return ad::dense(x, p(tape, "out.w"), std::optional(p(tape, "out.b")));
}

template <typename T>
Var<T> Model<T>::forward(ad::Tape<T>& tape, const Tensor<T>& batch, bool training, Rng* rng) {
  if (tape.params() != &params_) throw Error("tape is not bound to this model's parameters");
  if (batch.rank() != 3 || batch.dim(1) != spec_.n_channels || batch.dim(2) != spec_.n_samples || batch.dim(0) == 0) {
    throw ShapeError("model expects a [batch, " + std::to_string(spec_.n_channels) + ", " +
                     std::to_string(spec_.n_samples) + "] input, got " + ad::shape_string(batch.shape));
  }
  auto x = tape.constant(batch);
  switch (spec_.arch) {
    case Arch::eegnet: return forward_eegnet(tape, x, training, rng);
    case Arch::lstm: return forward_lstm(tape, x, training, rng);
    case Arch::dgcnn: return forward_dgcnn(tape, x, training, rng);
    case Arch::transformer: return forward_transformer(tape, x, training, rng);
    case Arch::conformer: return forward_conformer(tape, x, training, rng);
  }
  throw ConfigError("unknown architecture");
}

template class Model<float>;
template class Model<double>;
template class Model<long double>;

template <typename To, typename From>
Model<To> convert(const Model<From>& model) {
  Model<To> out(model.spec(), 0);
  for (std::size_t i = 0; i < model.params().size(); ++i) out.params()[i].value = model.params()[i].value.template cast<To>();
  for (std::size_t i = 0; i < model.batch_norms().size(); ++i) {
    out.batch_norms()[i].running_mean = model.batch_norms()[i].running_mean.template cast<To>();
    out.batch_norms()[i].running_var = model.batch_norms()[i].running_var.template cast<To>();
  }
  out.pin_spectral_radius(model.pinned_spectral_radius());
  return out;
}

template Model<double> convert(const Model<float>&);
template Model<float> convert(const Model<double>&);
template Model<float> convert(const Model<float>&);
template Model<double> convert(const Model<double>&);
template Model<long double> convert(const Model<double>&);

ModelGradCheck model_grad_check(Arch arch, Size size, const ad::GradCheckOptions& opts, std::size_t batch) {
  const auto start = std::chrono::steady_clock::now();
  Model<double> model(ModelSpec::make(arch, size), opts.seed);
  model.freeze_spectral_radius();
  auto wide = convert<long double>(model);
  Rng rng(splitmix64(opts.seed + 1));
  Tensor<double> x({batch, model.spec().n_channels, model.spec().n_samples});
  for (auto& v : x.data) v = rng.normal();
  const auto x_wide = x.cast<long double>();
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 2);
  ad::LossClosure loss = [&](ad::Tape<double>& tape) {
    return ad::cross_entropy(model.forward(tape, x, true, nullptr), labels);
  };
  ad::LossClosureT<long double> wide_loss = [&](ad::Tape<long double>& tape) {
    return ad::cross_entropy(wide.forward(tape, x_wide, true, nullptr), labels);
  };
  const auto grads = ad::analytic_gradients(loss, model.params());
  const auto report = ad::compare_gradients(loss, model.params(), wide_loss, wide.params(), grads, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {arch, size, report.max_error, report.checked, report.kink_skipped, report.worst, seconds, report.refined};
}

// --- audit -----------------------------------------------------------------

std::int64_t target_param_count(Arch arch, Size size) {
  static const std::int64_t table[5][3] = {
      {1888, 11504, 132096},     // eegnet
      {3902, 98402, 1161002},    // lstm
      {12527, 107563, 1049763},  // dgcnn
      {3090, 141866, 1144834},   // transformer
      {36026, 164906, 1404946},  // conformer
  };
  return table[static_cast<int>(arch)][static_cast<int>(size)];
}

AuditReport audit_params(double tolerance) {
  AuditReport report;
  for (Arch arch : kArchs) {
    std::int64_t previous = -1;
    for (Size size : kSizes) {
      Model<float> model(ModelSpec::make(arch, size), 0);
      AuditRow row{arch, size, target_param_count(arch, size), static_cast<std::int64_t>(model.count_params())};
      row.ratio = static_cast<double>(row.actual) / static_cast<double>(row.target);
      row.within_budget = std::abs(row.ratio - 1.0) <= tolerance;
      report.within_budget += row.within_budget ? 1 : 0;
      if (row.actual <= previous) report.ordering_ok = false;
      previous = row.actual;
      report.rows.push_back(row);
    }
  }
  return report;
}

// --- checkpoints -----------------------------------------------------------

namespace {

void write_tensor(detail::BinaryWriter& w, const std::string& name, const Tensor<float>& t) {
  w.string(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape) {
    const std::uint64_t v = d;
    w.bytes(&v, sizeof v);
  }
  w.values(t.data);
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  detail::BinaryWriter w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.string(model.spec().to_json().dump());
  w.u32(static_cast<std::uint32_t>(model.params().size() + 2 * model.batch_norms().size()));
  for (const auto& p : model.params()) write_tensor(w, p.name, p.value);
  for (const auto& s : model.batch_norms()) {
    write_tensor(w, s.name + ".running_mean", s.running_mean);
    write_tensor(w, s.name + ".running_var", s.running_var);
  }
  w.finish();
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  using detail::BinaryReader;
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError(FormatErrorKind::bad_magic, "'" + path.string() + "' is not a model checkpoint");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::version_mismatch,
                      "checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  ModelSpec spec;
  try {
    spec = ModelSpec::from_json(nlohmann::json::parse(r.string("descriptor")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::bad_manifest, std::string("checkpoint descriptor: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::bad_manifest, std::string("checkpoint descriptor: ") + e.what());
  }
  Model<float> model(spec, 0);
  std::map<std::string, Tensor<float>*> slots;
  for (auto& p : model.params()) slots[p.name] = &p.value;
  for (auto& s : model.batch_norms()) {
    slots[s.name + ".running_mean"] = &s.running_mean;
    slots[s.name + ".running_var"] = &s.running_var;
  }
  const auto n = r.u32("tensor count");
  if (n != slots.size()) {
    throw FormatError(FormatErrorKind::length_mismatch, "checkpoint holds " + std::to_string(n) +
                                                            " tensors, model needs " + std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name = r.string("tensor name");
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError(FormatErrorKind::bad_manifest, "unexpected tensor '" + name + "'");
    const auto rank = r.u32("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      r.bytes(&v, sizeof v, "tensor dims");
      d = static_cast<std::size_t>(v);
    }
    if (shape != it->second->shape) {
      throw FormatError(FormatErrorKind::length_mismatch, "tensor '" + name + "' has shape " + ad::shape_string(shape) +
                                                              ", model expects " + ad::shape_string(it->second->shape));
    }
    it->second->data = r.values<float>(ad::numel(shape), "tensor values");
  }
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::length_mismatch, "trailing bytes after checkpoint");
  return model;
}

}  // namespace neurodecode::models
