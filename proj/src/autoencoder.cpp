#include "evitransfer/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binary_io.hpp"
#include "evitransfer/error.hpp"

namespace evt {

void AutoencoderConfig::validate() const {
  require(input_dim > 0, ErrorKind::Config, "autoencoder input_dim must be positive");
  require(latent_dim > 0, ErrorKind::Config, "autoencoder latent_dim must be positive");
  for (auto w : hidden) require(w > 0, ErrorKind::Config, "hidden widths must be positive");
  require(corruption_rate >= 0.0 && corruption_rate < 1.0, ErrorKind::Config,
          "corruption rate must lie in [0, 1)");
  require(hidden_activation != Activation::Softmax && output_activation != Activation::Softmax,
          ErrorKind::Config, "softmax is only allowed on evidence heads");
}

void AutoencoderModel::validate() const {
  config.validate();
  require(!encoder.empty() && encoder.size() == decoder.size(), ErrorKind::Shape,
          "decoder must mirror the encoder");
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto& e = encoder[i];
    const auto& d = decoder[decoder.size() - 1 - i];
    require(e.in_width() == d.out_width() && e.out_width() == d.in_width(), ErrorKind::Shape,
            "decoder layer widths do not mirror encoder layer " + std::to_string(i));
    require(e.bias.size() == e.out_width() && d.bias.size() == d.out_width(), ErrorKind::Shape,
            "bias length mismatch");
    require(e.activation != Activation::Softmax && d.activation != Activation::Softmax,
            ErrorKind::Config, "softmax is only allowed on evidence heads");
    if (i > 0)
      require(encoder[i - 1].out_width() == e.in_width(), ErrorKind::Shape,
              "encoder layers do not chain");
  }
  require(latent_dim() == config.latent_dim, ErrorKind::Shape, "latent width mismatch");
  for (const auto& h : heads) {
    require(h.layer.in_width() == latent_dim(), ErrorKind::Shape,
            "head '" + h.name + "' does not read the latent layer");
    require(h.layer.activation == Activation::Softmax, ErrorKind::Config,
            "head '" + h.name + "' must be softmax");
  }
}

AutoencoderModel make_autoencoder(const AutoencoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.latent_dim);

  AutoencoderModel model;
  model.config = config;
  const std::size_t depth = widths.size() - 1;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto act = i + 1 == depth ? Activation::Linear : config.hidden_activation;
    model.encoder.push_back(make_dense(widths[i], widths[i + 1], act, rng));
  }
  for (std::size_t i = depth; i > 0; --i) {
    const auto act = i == 1 ? config.output_activation : config.hidden_activation;
    model.decoder.push_back(make_dense(widths[i], widths[i - 1], act, rng));
  }
  return model;
}

void EvidenceSet::add(std::string name, Matrix one_hot_labels) {
  names.push_back(std::move(name));
  sources.push_back(std::move(one_hot_labels));
}

EvidenceSet EvidenceSet::select_rows(std::span<const std::size_t> indices) const {
  EvidenceSet out;
  out.names = names;
  for (const auto& s : sources) out.sources.push_back(s.select_rows(indices));
  return out;
}

void EvidenceSet::validate() const {
  require(sources.size() == names.size(), ErrorKind::Config, "evidence names/sources mismatch");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    require(seen.insert(names[j]).second, ErrorKind::Config,
            "duplicate evidence source name '" + names[j] + "'");
    const auto& s = sources[j];
    require(s.rows() == rows(), ErrorKind::Alignment,
            "evidence source '" + names[j] + "' has a different row count");
    require(s.cols() >= 1, ErrorKind::Shape, "evidence source '" + names[j] + "' has no classes");
    for (std::size_t r = 0; r < s.rows(); ++r) {
      std::size_t ones = 0;
      for (double v : s.row(r)) {
        require(v == 0.0 || v == 1.0, ErrorKind::Data,
                "evidence '" + names[j] + "' row " + std::to_string(r) + " is not one-hot");
        ones += v == 1.0;
      }
      require(ones == 1, ErrorKind::Data,
              "evidence '" + names[j] + "' row " + std::to_string(r) + " is not one-hot");
    }
  }
}

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
  Matrix out(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < classes, ErrorKind::Data,
            "label " + std::to_string(labels[i]) + " out of range at row " + std::to_string(i));
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

Matrix corrupt_input(const Matrix& batch, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::Config, "corruption rate must lie in [0, 1)");
  Matrix out = batch;
  if (rate == 0.0) return out;
  for (double& v : out.values())
    if (rng.bernoulli(rate)) v = 0.0;
  return out;
}

Matrix corrupt_input(const Matrix& batch, double rate, std::uint64_t seed) {
  Rng rng(seed);
  return corrupt_input(batch, rate, rng);
}

namespace {

struct ForwardTrace {
  std::vector<Matrix> encoder_in;
  std::vector<Matrix> encoder_out;
  std::vector<Matrix> decoder_in;
  std::vector<Matrix> decoder_out;
  const Matrix& latent() const { return encoder_out.back(); }
  const Matrix& output() const { return decoder_out.back(); }
};

ForwardTrace forward_trace(const AutoencoderModel& model, const Matrix& input) {
  ForwardTrace t;
  const Matrix* x = &input;
  for (const auto& layer : model.encoder) {
    t.encoder_in.push_back(*x);
    t.encoder_out.push_back(dense_forward(layer, *x));
    x = &t.encoder_out.back();
  }
  for (const auto& layer : model.decoder) {
    t.decoder_in.push_back(*x);
    t.decoder_out.push_back(dense_forward(layer, *x));
    x = &t.decoder_out.back();
  }
  return t;
}

ParamGrads zero_grads(const DenseLayer& layer) {
  return {Matrix(layer.in_width(), layer.out_width()), std::vector<double>(layer.out_width())};
}

void add_in_place(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void append_blocks(std::vector<ParamBlock>& blocks, const std::string& prefix,
                   std::vector<DenseLayer*> layers, std::vector<ParamGrads>& grads) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    blocks.push_back({prefix + "." + std::to_string(i) + ".weights", layers[i]->weights.values(),
                      grads[i].weights.values()});
    blocks.push_back({prefix + "." + std::to_string(i) + ".bias", layers[i]->bias, grads[i].bias});
  }
}

std::vector<DenseLayer*> layer_ptrs(std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer*> out;
  for (auto& l : layers) out.push_back(&l);
  return out;
}

void check_finite_loss(double loss, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss))
    fail(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + " (loss " + std::to_string(loss) + ")");
}

// Shared loop for both training steps. The RNG stream (shuffles, then
// corruption per batch) is consumed identically whether or not evidence is
// present, so lambda = 0 transfer retraces initialisation exactly.
void run_training(AutoencoderModel& model, const Matrix& data, const EvidenceSet* evidence,
                  const TransferConfig& transfer, const TrainConfig& config,
                  const std::function<void(const JointGradients&, double)>& on_batch,
                  const std::function<void(std::size_t)>& on_epoch_end) {
  require(data.rows() > 0, ErrorKind::Count, "training data is empty");
  require(data.cols() == model.input_dim(), ErrorKind::Shape,
          "data has " + std::to_string(data.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  require(config.batch_size > 0, ErrorKind::Config, "batch size must be positive");
  config.ssim.validate();

  Rng rng(config.seed);
  AdamOptimizer adam(config.adam);
  auto order = iota_indices(data.rows());
  const double rate = config.denoise ? model.config.corruption_rate : 0.0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix target = data.select_rows(idx);
      const Matrix input = corrupt_input(target, rate, rng);
      EvidenceSet batch_evidence;
      if (evidence != nullptr) batch_evidence = evidence->select_rows(idx);

      auto grads = joint_loss_and_gradients(model, input, target,
                                            evidence != nullptr ? &batch_evidence : nullptr,
                                            transfer, config.ssim);
      check_finite_loss(grads.total, epoch, step);

      std::vector<ParamBlock> blocks;
      append_blocks(blocks, "encoder", layer_ptrs(model.encoder), grads.encoder);
      append_blocks(blocks, "decoder", layer_ptrs(model.decoder), grads.decoder);
      if (evidence != nullptr) {
        std::vector<DenseLayer*> heads;
        for (auto& h : model.heads) heads.push_back(&h.layer);
        append_blocks(blocks, "head", heads, grads.heads);
      }
      adam.step(blocks);
      on_batch(grads, static_cast<double>(idx.size()) / static_cast<double>(data.rows()));
      ++step;
    }
    on_epoch_end(epoch);
  }
}

}  // namespace

JointGradients joint_loss_and_gradients(const AutoencoderModel& model, const Matrix& input,
                                        const Matrix& target, const EvidenceSet* evidence,
                                        const TransferConfig& transfer, const SsimConfig& ssim) {
  require(input.rows() == target.rows() && input.cols() == target.cols(), ErrorKind::Shape,
          "input and target batches differ in shape");
  const bool with_evidence = evidence != nullptr && evidence->size() > 0;
  if (with_evidence) {
    require(evidence->rows() == input.rows(), ErrorKind::Alignment,
            "evidence rows do not match batch rows");
    require(evidence->size() == model.heads.size(), ErrorKind::Config,
            "model has " + std::to_string(model.heads.size()) + " heads for " +
                std::to_string(evidence->size()) + " evidence sources");
  }

  const ForwardTrace trace = forward_trace(model, input);
  JointGradients out;
  auto recon = ssim_loss(target, trace.output(), ssim);
  out.ae_loss = recon.loss;

  Matrix grad = std::move(recon.grad);
  out.decoder.resize(model.decoder.size());
  for (std::size_t i = model.decoder.size(); i-- > 0;) {
    auto back = dense_backward(model.decoder[i], trace.decoder_in[i], trace.decoder_out[i], grad);
    out.decoder[i] = std::move(back.params);
    grad = std::move(back.input_grad);
  }

  if (with_evidence) {
    const double k = static_cast<double>(evidence->size());
    for (std::size_t j = 0; j < evidence->size(); ++j) {
      const auto& head = model.heads[j].layer;
      const Matrix q = softmax_rows(dense_preactivation(head, trace.latent()));
      auto ce = softmax_cross_entropy(evidence->sources[j], q);
      out.ce_losses.push_back(ce.loss);
      if (transfer.lambda > 0.0) {
        for (double& g : ce.grad.values()) g *= transfer.lambda / k;
        auto back = affine_backward(head, trace.latent(), ce.grad);
        out.heads.push_back(std::move(back.params));
        add_in_place(grad, back.input_grad);
      } else {
        out.heads.push_back(zero_grads(head));
      }
    }
    TransferConfig cfg = transfer;
    cfg.evidence_count = evidence->size();
    out.total = evidence_transfer_loss(out.ae_loss, out.ce_losses, cfg);
  } else {
    out.total = out.ae_loss;
  }

  out.encoder.resize(model.encoder.size());
  for (std::size_t i = model.encoder.size(); i-- > 0;) {
    auto back = dense_backward(model.encoder[i], trace.encoder_in[i], trace.encoder_out[i], grad);
    out.encoder[i] = std::move(back.params);
    grad = std::move(back.input_grad);
  }
  return out;
}

InitResult train_init(AutoencoderModel model, const Matrix& data, const TrainConfig& config) {
  model.validate();
  InitResult result;
  double epoch_loss = 0.0;
  run_training(
      model, data, nullptr, TransferConfig{}, config,
      [&](const JointGradients& g, double weight) { epoch_loss += g.ae_loss * weight; },
      [&](std::size_t) {
        result.loss_curve.push_back(epoch_loss);
        epoch_loss = 0.0;
      });
  result.model = std::move(model);
  return result;
}

Matrix encode(const AutoencoderModel& model, const Matrix& data) {
  require(!model.encoder.empty(), ErrorKind::Config, "model has no encoder");
  require(data.cols() == model.input_dim(), ErrorKind::Shape,
          "encode: data has " + std::to_string(data.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  Matrix x = data;
  for (const auto& layer : model.encoder) x = dense_forward(layer, x);
  return x;
}

Matrix reconstruct(const AutoencoderModel& model, const Matrix& data) {
  Matrix x = encode(model, data);
  for (const auto& layer : model.decoder) x = dense_forward(layer, x);
  return x;
}

double reconstruction_loss(const AutoencoderModel& model, const Matrix& data,
                           const SsimConfig& ssim) {
  return ssim_loss(data, reconstruct(model, data), ssim).loss;
}

Matrix head_probabilities(const AutoencoderModel& model, std::size_t head_index,
                          const Matrix& data) {
  require(head_index < model.heads.size(), ErrorKind::Config, "no such evidence head");
  return dense_forward(model.heads[head_index].layer, encode(model, data));
}

AutoencoderModel attach_evidence_heads(AutoencoderModel model, const EvidenceSet& evidence,
                                       std::uint64_t seed) {
  model.validate();
  evidence.validate();
  Rng rng(seed);
  model.heads.clear();
  for (std::size_t j = 0; j < evidence.size(); ++j) {
    model.heads.push_back({evidence.names[j], make_dense(model.latent_dim(),
                                                         evidence.sources[j].cols(),
                                                         Activation::Softmax, rng)});
  }
  return model;
}

TransferResult train_transfer(AutoencoderModel model, const Matrix& data,
                              const EvidenceSet& evidence, const TransferConfig& transfer,
                              const TrainConfig& config) {
  model.validate();
  evidence.validate();
  require(evidence.rows() == data.rows(), ErrorKind::Alignment,
          "evidence has " + std::to_string(evidence.rows()) + " rows, data has " +
              std::to_string(data.rows()));
  TransferConfig cfg = transfer;
  cfg.evidence_count = evidence.size();
  cfg.validate();
  require(model.heads.size() == evidence.size(), ErrorKind::Config,
          "attach evidence heads before transfer training");
  for (std::size_t j = 0; j < evidence.size(); ++j) {
    require(model.heads[j].name == evidence.names[j], ErrorKind::Config,
            "head order does not match evidence order");
    require(model.heads[j].layer.out_width() == evidence.sources[j].cols(), ErrorKind::Shape,
            "head '" + evidence.names[j] + "' width does not match its class count");
  }

  TransferResult result;
  result.curves.ce_loss.assign(evidence.size(), {});
  double ae = 0.0, total = 0.0;
  std::vector<double> ce(evidence.size(), 0.0);
  run_training(
      model, data, &evidence, cfg, config,
      [&](const JointGradients& g, double weight) {
        ae += g.ae_loss * weight;
        total += g.total * weight;
        for (std::size_t j = 0; j < ce.size(); ++j) ce[j] += g.ce_losses[j] * weight;
      },
      [&](std::size_t) {
        result.curves.ae_loss.push_back(ae);
        result.curves.total.push_back(total);
        for (std::size_t j = 0; j < ce.size(); ++j) result.curves.ce_loss[j].push_back(ce[j]);
        ae = total = 0.0;
        std::fill(ce.begin(), ce.end(), 0.0);
      });
  result.model = std::move(model);
  return result;
}

ScreeningVerdict screen_evidence(const Matrix& evidence, const std::string& source_name,
                                 const Matrix& data, const ScreeningConfig& config) {
  require(config.epochs > 0, ErrorKind::Config,
          "screening of '" + source_name + "' is inconclusive with a zero iteration budget");
  require(config.batch_size > 0 && config.hidden > 0, ErrorKind::Config,
          "screening network widths and batch size must be positive");
  EvidenceSet single;
  single.add(source_name, evidence);
  single.validate();
  require(evidence.rows() == data.rows(), ErrorKind::Alignment,
          "evidence '" + source_name + "' rows do not match data rows");
  const std::size_t classes = evidence.cols();
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    bool any = false;
    for (std::size_t r = 0; r < evidence.rows() && !any; ++r) any = evidence(r, c) == 1.0;
    present += any;
  }
  require(present >= 2, ErrorKind::Data,
          "degenerate evidence '" + source_name + "': fewer than two classes present");

  Rng rng(config.seed);
  DenseLayer hidden = make_dense(data.cols(), config.hidden, Activation::ReLU, rng);
  DenseLayer head = make_dense(config.hidden, classes, Activation::Softmax, rng);
  AdamOptimizer adam(config.adam);
  auto order = iota_indices(data.rows());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix x = data.select_rows(idx);
      const Matrix v = evidence.select_rows(idx);
      const Matrix h = dense_forward(hidden, x);
      const Matrix q = softmax_rows(dense_preactivation(head, h));
      auto ce = softmax_cross_entropy(v, q);
      check_finite_loss(ce.loss, epoch, start);
      auto head_back = affine_backward(head, h, ce.grad);
      auto hidden_back = dense_backward(hidden, x, h, head_back.input_grad);
      std::vector<ParamBlock> blocks{
          {"screen.hidden.weights", hidden.weights.values(), hidden_back.params.weights.values()},
          {"screen.hidden.bias", hidden.bias, hidden_back.params.bias},
          {"screen.head.weights", head.weights.values(), head_back.params.weights.values()},
          {"screen.head.bias", head.bias, head_back.params.bias}};
      adam.step(blocks);
    }
  }

  const Matrix q = dense_forward(head, dense_forward(hidden, data));
  double entropy = 0.0;
  for (std::size_t r = 0; r < q.rows(); ++r)
    for (double p : q.row(r))
      if (p > 0.0) entropy -= p * std::log(p);
  entropy /= static_cast<double>(q.rows());

  ScreeningVerdict verdict;
  verdict.source = source_name;
  verdict.mean_entropy = entropy;
  verdict.entropy_ratio = entropy / std::log(static_cast<double>(classes));
  verdict.accepted = verdict.entropy_ratio < config.threshold;
  return verdict;
}

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'V', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_layer(detail::BinaryWriter& w, const DenseLayer& layer) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(layer.activation));
  w.put<std::uint64_t>(layer.in_width());
  w.put<std::uint64_t>(layer.out_width());
  w.put_doubles(layer.weights.values());
  w.put_doubles(layer.bias);
}

DenseLayer read_layer(detail::BinaryReader& r) {
  const auto act = r.get<std::uint8_t>("activation");
  require(act <= static_cast<std::uint8_t>(Activation::Softmax), ErrorKind::Data,
          "unknown activation code in checkpoint");
  const auto in = r.get<std::uint64_t>("layer width");
  const auto out = r.get<std::uint64_t>("layer width");
  require(in > 0 && out > 0 && in * out < (1ULL << 32), ErrorKind::Data,
          "implausible layer shape in checkpoint");
  DenseLayer layer;
  layer.activation = static_cast<Activation>(act);
  layer.weights = Matrix(in, out);
  layer.bias.assign(out, 0.0);
  r.get_doubles(layer.weights.values(), "weights");
  r.get_doubles(layer.bias, "bias");
  return layer;
}

}  // namespace

void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path) {
  model.validate();
  detail::BinaryWriter w(path);
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto& c = model.config;
  w.put<std::uint64_t>(c.input_dim);
  w.put<std::uint64_t>(c.hidden.size());
  for (auto h : c.hidden) w.put<std::uint64_t>(h);
  w.put<std::uint64_t>(c.latent_dim);
  w.put<double>(c.corruption_rate);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.hidden_activation));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.output_activation));
  w.put<std::uint64_t>(c.seed);
  for (const auto* stack : {&model.encoder, &model.decoder}) {
    w.put<std::uint64_t>(stack->size());
    for (const auto& layer : *stack) write_layer(w, layer);
  }
  w.put<std::uint64_t>(model.heads.size());
  for (const auto& h : model.heads) {
    w.put_string(h.name);
    write_layer(w, h.layer);
  }
  w.finish();
}

AutoencoderModel load_checkpoint(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  char magic[8];
  r.get_bytes(magic, "magic");
  require(std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic)),
          ErrorKind::Data, "'" + path.string() + "' is not a model checkpoint");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kCheckpointVersion, ErrorKind::Data,
          "unsupported checkpoint version " + std::to_string(version));

  AutoencoderModel model;
  auto& c = model.config;
  c.input_dim = r.get<std::uint64_t>("input_dim");
  const auto n_hidden = r.get<std::uint64_t>("hidden count");
  require(n_hidden < 64, ErrorKind::Data, "implausible hidden layer count");
  c.hidden.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i) c.hidden.push_back(r.get<std::uint64_t>("hidden"));
  c.latent_dim = r.get<std::uint64_t>("latent_dim");
  c.corruption_rate = r.get<double>("corruption_rate");
  c.hidden_activation = static_cast<Activation>(r.get<std::uint8_t>("hidden activation"));
  c.output_activation = static_cast<Activation>(r.get<std::uint8_t>("output activation"));
  c.seed = r.get<std::uint64_t>("seed");
  for (auto* stack : {&model.encoder, &model.decoder}) {
    const auto n = r.get<std::uint64_t>("layer count");
    require(n < 64, ErrorKind::Data, "implausible layer count");
    for (std::uint64_t i = 0; i < n; ++i) stack->push_back(read_layer(r));
  }
  const auto n_heads = r.get<std::uint64_t>("head count");
  require(n_heads < 1024, ErrorKind::Data, "implausible head count");
  for (std::uint64_t i = 0; i < n_heads; ++i) {
    EvidenceHead h;
    h.name = r.get_string("head name");
    h.layer = read_layer(r);
    model.heads.push_back(std::move(h));
  }
  require(r.at_end(), ErrorKind::Data, "trailing bytes in checkpoint");
  model.validate();
  return model;
}

}  // namespace evt
