#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "g2cl/image.hpp"
#include "g2cl/matrix.hpp"

namespace g2cl::encoder {

struct EncoderConfig {
  std::string backbone_name = "toy";
  int embedding_dim = 64;
  bool pretrained = false;
  int input_height = 224;
  int input_width = 224;
  // Parameter file used when pretrained = true.
  std::string weights_path;
  std::uint64_t seed = 0;
  int base_channels = 16;

  void validate() const;
};

enum class Mode { train, inference };

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
};

// The toy backbone: four blocks of (3x3 conv, stride 2, pad 1, ReLU) with
// channels base, 2*base, 4*base, 8*base; global average pooling; a linear
// head to D; L2 normalisation. Scalar-templated so gradient checks can run
// in double precision.
template <typename T>
class ToyNet {
 public:
  static constexpr int kBlocks = 4;

  ToyNet(int embedding_dim, int base_channels);

  // Kaiming-normal conv/head weights, zero biases.
  void init(std::uint64_t seed);

  // input: NCHW batch. Returns B x D unit-norm rows (row-major). When
  // keep_activations, the intermediate tensors are kept for backward().
  std::vector<T> forward(std::span<const T> input, int batch, int height, int width,
                         bool keep_activations);

  // Accumulates dLoss/dParam given dLoss/dEmbedding (B x D, row-major) for the
  // last forward(keep_activations = true).
  void backward(std::span<const T> grad_embeddings);

  void zero_grad();

  std::vector<ParamTensor<T>>& params() { return params_; }
  const std::vector<ParamTensor<T>>& params() const { return params_; }
  std::size_t parameter_count() const;
  int embedding_dim() const { return dim_; }

 private:
  int dim_;
  int base_;
  std::vector<ParamTensor<T>> params_;

  // Activation cache from the last training forward.
  int batch_ = 0, height_ = 0, width_ = 0;
  std::vector<std::vector<T>> block_in_;   // input of block i
  std::vector<std::vector<T>> block_pre_;  // conv output of block i before ReLU
  std::vector<T> pooled_;
  std::vector<T> out_;
  std::vector<T> norms_;
};

// NCHW tensor in the network's input scaling, from interleaved RGB images.
template <typename T>
std::vector<T> images_to_tensor(std::span<const Image> images);

struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::span<float> value;
  std::span<float> grad;
};

// One parameter set, one callable: the satellite and UAV "branches" are the
// same object invoked on different inputs.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderConfig& config() const = 0;

  // B x D unit-norm embeddings. Throws ContractError when an image does not
  // match the configured input size. Train mode keeps activations for
  // backward().
  virtual MatrixF encode(std::span<const Image> images, Mode mode) = 0;

  // Accumulates parameter gradients for the last train-mode encode().
  virtual void backward(const MatrixF& grad_embeddings) = 0;

  virtual void zero_grad() = 0;
  virtual std::vector<ParamRef> parameters() = 0;

  std::size_t parameter_count();
};

using EncoderFactory = std::function<std::unique_ptr<Encoder>(const EncoderConfig&)>;

void register_backbone(const std::string& name, EncoderFactory factory);
std::vector<std::string> registered_backbones();

// Builds the configured backbone. With pretrained = true, parameters are
// loaded from config.weights_path and a missing/unreadable file is an error.
std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config);

}  // namespace g2cl::encoder
