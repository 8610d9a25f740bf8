#include "g2cl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "g2cl/checkpoint.hpp"
#include "g2cl/error.hpp"
#include "g2cl/kernels.hpp"
#include "g2cl/random.hpp"

namespace g2cl::encoder {

namespace {

kernels::ConvShape block_shape(int block, int batch, int height, int width, int base) {
  kernels::ConvShape s;
  s.batch = batch;
  s.in_channels = block == 0 ? 3 : base << (block - 1);
  s.out_channels = base << block;
  s.kernel = 3;
  s.stride = 2;
  s.pad = 1;
  s.in_height = height;
  s.in_width = width;
  for (int b = 0; b < block; ++b) {
    s.in_height = (s.in_height + 2 - 3) / 2 + 1;
    s.in_width = (s.in_width + 2 - 3) / 2 + 1;
  }
  return s;
}

}  // namespace

void EncoderConfig::validate() const {
  if (embedding_dim < 2)
    throw ConfigError("encoder: embedding_dim must be >= 2, got " + std::to_string(embedding_dim));
  if (input_height <= 0 || input_width <= 0) throw ConfigError("encoder: input size must be positive");
  if (base_channels < 1) throw ConfigError("encoder: base_channels must be >= 1");
}

template <typename T>
ToyNet<T>::ToyNet(int embedding_dim, int base_channels) : dim_(embedding_dim), base_(base_channels) {
  for (int b = 0; b < kBlocks; ++b) {
    const int cin = b == 0 ? 3 : base_ << (b - 1);
    const int cout = base_ << b;
    const std::string prefix = "block" + std::to_string(b) + ".conv.";
    params_.push_back({prefix + "weight", {cout, cin, 3, 3}, {}, {}});
    params_.push_back({prefix + "bias", {cout}, {}, {}});
  }
  const int last = base_ << (kBlocks - 1);
  params_.push_back({"head.weight", {dim_, last}, {}, {}});
  params_.push_back({"head.bias", {dim_}, {}, {}});
  for (auto& p : params_) {
    auto n = static_cast<std::size_t>(
        std::accumulate(p.shape.begin(), p.shape.end(), 1, std::multiplies<>()));
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
  }
}

template <typename T>
void ToyNet<T>::init(std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.shape.size() == 1) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    const int fan_in = static_cast<int>(p.value.size()) / p.shape[0];
    const bool is_head = p.name.rfind("head", 0) == 0;
    const double stddev = std::sqrt((is_head ? 1.0 : 2.0) / fan_in);
    Rng rng(mix_keys({seed, 0xE7C0DE, i}));
    for (auto& v : p.value) v = static_cast<T>(stddev * rng.normal());
  }
}

template <typename T>
std::size_t ToyNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ToyNet<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::vector<T> ToyNet<T>::forward(std::span<const T> input, int batch, int height, int width,
                                  bool keep_activations) {
  if (input.size() != static_cast<std::size_t>(batch) * 3 * height * width)
    throw ContractError("ToyNet::forward: input size does not match batch geometry");
  std::vector<T> x(input.begin(), input.end());
  std::vector<std::vector<T>> ins, pres;
  kernels::ConvShape s;
  for (int b = 0; b < kBlocks; ++b) {
    s = block_shape(b, batch, height, width, base_);
    std::vector<T> y(s.output_size());
    kernels::conv2d_forward<T>(s, x, params_[2 * b].value, params_[2 * b + 1].value, y);
    if (keep_activations) {
      ins.push_back(std::move(x));
      pres.push_back(y);
    }
    for (auto& v : y) v = v > T(0) ? v : T(0);
    x = std::move(y);
  }

  const int channels = s.out_channels;
  const int plane = s.out_height() * s.out_width();
  std::vector<T> pooled(static_cast<std::size_t>(batch) * channels);
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* src = x.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
      T acc = 0;
      for (int p = 0; p < plane; ++p) acc += src[p];
      pooled[static_cast<std::size_t>(n) * channels + c] = acc / static_cast<T>(plane);
    }

  const auto& hw = params_[2 * kBlocks].value;
  const auto& hb = params_[2 * kBlocks + 1].value;
  std::vector<T> out(static_cast<std::size_t>(batch) * dim_);
  std::vector<T> norms(static_cast<std::size_t>(batch));
  for (int n = 0; n < batch; ++n) {
    T sq = 0;
    for (int d = 0; d < dim_; ++d) {
      T acc = hb[d];
      for (int c = 0; c < channels; ++c)
        acc += hw[static_cast<std::size_t>(d) * channels + c] *
               pooled[static_cast<std::size_t>(n) * channels + c];
      out[static_cast<std::size_t>(n) * dim_ + d] = acc;
      sq += acc * acc;
    }
    const T norm = std::max(std::sqrt(sq), T(1e-12));
    norms[n] = norm;
    for (int d = 0; d < dim_; ++d) out[static_cast<std::size_t>(n) * dim_ + d] /= norm;
  }

  if (keep_activations) {
    batch_ = batch;
    height_ = height;
    width_ = width;
    block_in_ = std::move(ins);
    block_pre_ = std::move(pres);
    pooled_ = std::move(pooled);
    out_ = out;
    norms_ = std::move(norms);
  }
  return out;
}

template <typename T>
void ToyNet<T>::backward(std::span<const T> grad_embeddings) {
  if (block_in_.empty()) throw ContractError("ToyNet::backward without a cached forward pass");
  const int batch = batch_;
  if (grad_embeddings.size() != static_cast<std::size_t>(batch) * dim_)
    throw ContractError("ToyNet::backward: gradient shape mismatch");
  const auto last = block_shape(kBlocks - 1, batch, height_, width_, base_);
  const int channels = last.out_channels;
  const int plane = last.out_height() * last.out_width();

  // Through the L2 normalisation: dz = (dy - y <y, dy>) / |z|.
  std::vector<T> dz(static_cast<std::size_t>(batch) * dim_);
  for (int n = 0; n < batch; ++n) {
    const T* y = out_.data() + static_cast<std::size_t>(n) * dim_;
    const T* dy = grad_embeddings.data() + static_cast<std::size_t>(n) * dim_;
    T dot = 0;
    for (int d = 0; d < dim_; ++d) dot += y[d] * dy[d];
    for (int d = 0; d < dim_; ++d)
      dz[static_cast<std::size_t>(n) * dim_ + d] = (dy[d] - y[d] * dot) / norms_[n];
  }

  auto& hw = params_[2 * kBlocks];
  auto& hb = params_[2 * kBlocks + 1];
  std::vector<T> dpooled(static_cast<std::size_t>(batch) * channels, T(0));
  for (int n = 0; n < batch; ++n)
    for (int d = 0; d < dim_; ++d) {
      const T g = dz[static_cast<std::size_t>(n) * dim_ + d];
      hb.grad[d] += g;
      for (int c = 0; c < channels; ++c) {
        hw.grad[static_cast<std::size_t>(d) * channels + c] +=
            g * pooled_[static_cast<std::size_t>(n) * channels + c];
        dpooled[static_cast<std::size_t>(n) * channels + c] +=
            g * hw.value[static_cast<std::size_t>(d) * channels + c];
      }
    }

  std::vector<T> grad(last.output_size());
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T g = dpooled[static_cast<std::size_t>(n) * channels + c] / static_cast<T>(plane);
      std::fill_n(grad.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(n) * channels + c) * plane),
                  plane, g);
    }

  for (int b = kBlocks - 1; b >= 0; --b) {
    const auto s = block_shape(b, batch, height_, width_, base_);
    const auto& pre = block_pre_[b];
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (!(pre[i] > T(0))) grad[i] = T(0);
    std::vector<T> gw(s.weight_size()), gb(static_cast<std::size_t>(s.out_channels));
    std::vector<T> gin(b > 0 ? s.input_size() : 0);
    kernels::conv2d_backward<T>(s, block_in_[b], params_[2 * b].value, grad, gin, gw, gb);
    auto& pw = params_[2 * b].grad;
    auto& pb = params_[2 * b + 1].grad;
    for (std::size_t i = 0; i < gw.size(); ++i) pw[i] += gw[i];
    for (std::size_t i = 0; i < gb.size(); ++i) pb[i] += gb[i];
    grad = std::move(gin);
  }
}

template <typename T>
std::vector<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) return {};
  const int h = images.front().height, w = images.front().width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> out(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.height != h || img.width != w)
      throw ContractError("images_to_tensor: images in a batch must share one size");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out[(n * 3 + static_cast<std::size_t>(c)) * plane + static_cast<std::size_t>(y) * w + x] =
              static_cast<T>((img.at(y, x, c) - 0.5f) * 4.0f);
  }
  return out;
}

template class ToyNet<float>;
template class ToyNet<double>;
template std::vector<float> images_to_tensor<float>(std::span<const Image>);
template std::vector<double> images_to_tensor<double>(std::span<const Image>);

std::size_t Encoder::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

namespace {

class ToyEncoder final : public Encoder {
 public:
  explicit ToyEncoder(const EncoderConfig& config)
      : config_(config), net_(config.embedding_dim, config.base_channels) {
    net_.init(config.seed);
  }

  const EncoderConfig& config() const override { return config_; }

  MatrixF encode(std::span<const Image> images, Mode mode) override {
    for (std::size_t i = 0; i < images.size(); ++i)
      if (images[i].height != config_.input_height || images[i].width != config_.input_width)
        throw ContractError("encode: image " + std::to_string(i) + " is " +
                            std::to_string(images[i].height) + "x" + std::to_string(images[i].width) +
                            ", expected " + std::to_string(config_.input_height) + "x" +
                            std::to_string(config_.input_width));
    MatrixF out(static_cast<Eigen::Index>(images.size()), config_.embedding_dim);
    if (images.empty()) return out;
    auto tensor = images_to_tensor<float>(images);
    auto emb = net_.forward(tensor, static_cast<int>(images.size()), config_.input_height,
                            config_.input_width, mode == Mode::train);
    std::copy(emb.begin(), emb.end(), out.data());
    return out;
  }

  void backward(const MatrixF& grad) override {
    net_.backward(std::span<const float>(grad.data(), static_cast<std::size_t>(grad.size())));
  }

  void zero_grad() override { net_.zero_grad(); }

  std::vector<ParamRef> parameters() override {
    std::vector<ParamRef> out;
    for (auto& p : net_.params()) out.push_back({p.name, p.shape, p.value, p.grad});
    return out;
  }

 private:
  EncoderConfig config_;
  ToyNet<float> net_;
};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, EncoderFactory>& registry() {
  static std::map<std::string, EncoderFactory> r = {
      {"toy", [](const EncoderConfig& c) { return std::make_unique<ToyEncoder>(c); }}};
  return r;
}

}  // namespace

void register_backbone(const std::string& name, EncoderFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> registered_backbones() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(config.backbone_name);
    if (it == registry().end()) {
      std::string known;
      for (const auto& [name, _] : registry()) known += (known.empty() ? "" : ", ") + name;
      throw ConfigError("unknown backbone '" + config.backbone_name + "'; known: " + known);
    }
    factory = it->second;
  }
  auto enc = factory(config);
  if (config.pretrained) {
    if (config.weights_path.empty())
      throw ConfigError("backbone '" + config.backbone_name +
                        "': pretrained = true but no weights_path given");
    if (!std::filesystem::exists(config.weights_path))
      throw ConfigError("backbone '" + config.backbone_name + "': pretrained weights not found at " +
                        config.weights_path);
    import_parameters(load_checkpoint(config.weights_path), *enc);
  }
  return enc;
}

}  // namespace g2cl::encoder
