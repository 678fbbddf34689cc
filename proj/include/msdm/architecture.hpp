#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "msdm/error.hpp"
#include "msdm/layers.hpp"
#include "msdm/rng.hpp"

namespace msdm {

struct ReceptiveField {
  int rf = 1;
  int jump = 1;
  bool operator==(const ReceptiveField&) const = default;
};

/// Folds rf <- rf + (k-1)*jump, jump <- jump*stride over the spatial layers.
/// Convolutions and pools are treated identically; other kinds are ignored.
inline ReceptiveField rf_symbolic(const std::vector<LayerSpec>& layers, int input_rf = 1, int input_jump = 1) {
  ReceptiveField r{input_rf, input_jump};
  for (const auto& l : layers) {
    if (!l.spatial()) continue;
    if (l.kernel < 1 || l.stride < 1) throw ConfigError("kernel and stride must be >= 1");
    r.rf += (l.kernel - 1) * r.jump;
    r.jump *= l.stride;
  }
  return r;
}

/// Spatial output extent of a stack on an n×n input (0 if it does not fit).
inline int stack_output_extent(const std::vector<LayerSpec>& layers, int n) {
  for (const auto& l : layers) {
    if (!l.spatial()) continue;
    n = valid_extent(n, l.kernel, l.stride);
    if (n < 1) return 0;
  }
  return n;
}

/// Channel count leaving a stack of convolutions.
inline int stack_out_channels(const std::vector<LayerSpec>& layers, int channels_in) {
  for (const auto& l : layers)
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear) channels_in = l.out_channels;
  return channels_in;
}

struct BranchPlan {
  std::string modality;
  int target_scale = 1;
  std::vector<LayerSpec> layers;
  ReceptiveField proven;
  int head_width = 512;
};

/// Synthesizes the conv/pool stack of one branch so that the composite
/// receptive field (encoder + branch) equals `target_scale` exactly.
///
/// Greedy rule over the remaining deficit d = (target - rf) / jump: emit a
/// kernel-3 convolution while d >= 2 and a kernel-2 one for the last unit;
/// after every second convolution insert a stride-2 max-pool when the
/// deficit left after it is still integral and at least 2. The second
/// convolution of a pair drops to kernel 2 when that makes the pool legal. Every convolution
/// is followed by batch-norm and ReLU. A 1×1 convolution to `head_width`
/// channels (with batch-norm and ReLU) closes the branch.
inline BranchPlan plan_branch(int encoder_rf, int encoder_jump, int target_scale, int channels_in,
                              int branch_width = 256, int head_width = 512, std::string modality = {}) {
  if (encoder_rf < 1 || encoder_jump < 1) throw ConfigError("encoder rf and jump must be >= 1");
  if (target_scale % 2 == 0) {
    throw Unreachable("scale " + std::to_string(target_scale) +
                      " is even; central-pixel extraction needs an odd extent");
  }
  if (encoder_rf % 2 == 0) {
    throw Unreachable("encoder receptive field " + std::to_string(encoder_rf) + " is even");
  }
  if (target_scale < encoder_rf) {
    throw Unreachable("scale " + std::to_string(target_scale) + " is smaller than the encoder receptive field " +
                      std::to_string(encoder_rf));
  }
  if ((target_scale - encoder_rf) % encoder_jump != 0) {
    throw Unreachable("scale " + std::to_string(target_scale) + " violates (scale - encoder_rf) mod jump = 0: (" +
                      std::to_string(target_scale) + " - " + std::to_string(encoder_rf) + ") mod " +
                      std::to_string(encoder_jump) + " = " +
                      std::to_string((target_scale - encoder_rf) % encoder_jump));
  }

  BranchPlan plan;
  plan.modality = std::move(modality);
  plan.target_scale = target_scale;
  plan.head_width = head_width;
  int deficit = (target_scale - encoder_rf) / encoder_jump;
  int channels = channels_in;
  int convs_since_pool = 0;
  while (deficit > 0) {
    int kernel = deficit >= 2 ? 3 : 2;
    // second conv of a pair: prefer leaving an odd deficit so the pool can follow
    if (convs_since_pool == 1 && deficit % 2 == 0 && deficit - 1 >= 5) kernel = 2;
    plan.layers.push_back(LayerSpec::conv(channels, branch_width, kernel));
    plan.layers.push_back(LayerSpec::batch_norm(branch_width));
    plan.layers.push_back(LayerSpec::relu());
    channels = branch_width;
    deficit -= kernel - 1;
    if (++convs_since_pool == 2 && deficit > 0 && (deficit - 1) % 2 == 0 && (deficit - 1) / 2 >= 2) {
      plan.layers.push_back(LayerSpec::pool(2, 2));
      deficit = (deficit - 1) / 2;
      convs_since_pool = 0;
    }
  }
  plan.layers.push_back(LayerSpec::conv(channels, head_width, 1));
  plan.layers.push_back(LayerSpec::batch_norm(head_width));
  plan.layers.push_back(LayerSpec::relu());

  plan.proven = rf_symbolic(plan.layers, encoder_rf, encoder_jump);
  if (plan.proven.rf != target_scale) {
    throw Unreachable("planner produced rf " + std::to_string(plan.proven.rf) + " for scale " +
                      std::to_string(target_scale));
  }
  return plan;
}

// ---------------------------------------------------------------------------

/// One input modality: a raster stack, its shared encoder, and the extents
/// (in input pixels) its branches look at.
struct ModalityConfig {
  std::string name;
  std::string raster_ref;  // GRB1 path
  double pixel_km = 1.0;   // ground size of one pixel, for footprints
  int bands = 1;
  std::vector<LayerSpec> encoder;  // conv/pool stack incl. batch-norm and ReLU
  int encoder_rf = 1;
  int encoder_jump = 1;
  std::vector<int> scales;
  int branch_width = 256;
  int head_width = 512;

  int encoder_channels() const { return stack_out_channels(encoder, bands); }

  void validate() const {
    if (name.empty()) throw ConfigError("modality needs a name");
    if (bands < 1) throw ConfigError("modality '" + name + "' needs at least one band");
    if (scales.empty()) throw ConfigError("modality '" + name + "' has no scales");
    const auto declared = rf_symbolic(encoder);
    if (declared.rf != encoder_rf || declared.jump != encoder_jump) {
      throw ConfigError("modality '" + name + "': encoder stack has rf " + std::to_string(declared.rf) + "/jump " +
                        std::to_string(declared.jump) + " but declares rf " + std::to_string(encoder_rf) +
                        "/jump " + std::to_string(encoder_jump));
    }
    int channels = bands;
    for (const auto& l : encoder) {
      if ((l.kind == LayerKind::Conv2d || l.kind == LayerKind::BatchNorm) && l.in_channels != channels) {
        throw ConfigError("modality '" + name + "': encoder channel chain broken at " + l.describe());
      }
      if (l.kind == LayerKind::Conv2d) channels = l.out_channels;
      if (l.kind == LayerKind::Linear) throw ConfigError("encoders may not contain linear layers");
    }
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (i > 0 && scales[i] <= scales[i - 1]) {
        throw ConfigError("modality '" + name + "': scales must be strictly increasing");
      }
      // plan_branch reports the exact violated constraint
      plan_branch(encoder_rf, encoder_jump, scales[i], encoder_channels(), 1, 1);
    }
  }
};

/// Encoder of pointwise convolutions with batch-norm and ReLU after each.
inline std::vector<LayerSpec> pointwise_encoder(int bands, const std::vector<int>& widths) {
  std::vector<LayerSpec> layers;
  int c = bands;
  for (int w : widths) {
    layers.push_back(LayerSpec::conv(c, w, 1));
    layers.push_back(LayerSpec::batch_norm(w));
    layers.push_back(LayerSpec::relu());
    c = w;
  }
  return layers;
}

/// Builds an encoder from (kernel, stride, channels) conv entries and
/// (kernel, stride) pool entries; channels = 0 marks a pool.
struct EncoderOp {
  int kernel = 1;
  int stride = 1;
  int channels = 0;
};

inline std::vector<LayerSpec> build_encoder(int bands, const std::vector<EncoderOp>& ops) {
  std::vector<LayerSpec> layers;
  int c = bands;
  for (const auto& op : ops) {
    if (op.channels == 0) {
      layers.push_back(LayerSpec::pool(op.kernel, op.stride));
      continue;
    }
    layers.push_back(LayerSpec::conv(c, op.channels, op.kernel, op.stride));
    layers.push_back(LayerSpec::batch_norm(op.channels));
    layers.push_back(LayerSpec::relu());
    c = op.channels;
  }
  return layers;
}

/// Bioclimatic default: four kernel-1 convolutions, receptive field 1.
inline ModalityConfig bioclim_modality(std::vector<int> scales, int bands = 19) {
  ModalityConfig m;
  m.name = "bioclim";
  m.pixel_km = 0.6;
  m.bands = bands;
  m.encoder = pointwise_encoder(bands, {64, 128, 256, 256});
  m.encoder_rf = 1;
  m.encoder_jump = 1;
  m.scales = std::move(scales);
  return m;
}

/// Satellite default: nine convolutions and one stride-2 pool with receptive
/// field 25 and jump 2, so that 25, 59 and 115 are all reachable.
inline std::vector<EncoderOp> satellite_encoder_ops() {
  return {{3, 1, 64},  {3, 1, 64},  {3, 1, 64},  {3, 2, 0},   {3, 1, 128},
          {1, 1, 128}, {3, 1, 128}, {3, 1, 256}, {1, 1, 256}, {3, 1, 256}};
}

inline ModalityConfig satellite_modality(std::vector<int> scales, int bands = 4) {
  ModalityConfig m;
  m.name = "sentinel2";
  m.pixel_km = 0.01;
  m.bands = bands;
  m.encoder = build_encoder(bands, satellite_encoder_ops());
  m.encoder_rf = 25;
  m.encoder_jump = 2;
  m.scales = std::move(scales);
  return m;
}

struct ModelConfig {
  std::vector<ModalityConfig> modalities;
  int species_count = 1;
  int projection_dim = 1024;
  std::uint64_t seed = 0;

  int branch_count() const {
    int n = 0;
    for (const auto& m : modalities) n += static_cast<int>(m.scales.size());
    return n;
  }
  int fusion_dim() const { return projection_dim * branch_count(); }

  const ModalityConfig& modality(const std::string& name) const {
    for (const auto& m : modalities)
      if (m.name == name) return m;
    throw ConfigError("unknown modality '" + name + "'");
  }

  void validate() const {
    if (modalities.empty()) throw ConfigError("model needs at least one modality");
    if (species_count < 1) throw ConfigError("species_count must be >= 1");
    if (projection_dim < 1) throw ConfigError("projection_dim must be >= 1");
    for (std::size_t i = 0; i < modalities.size(); ++i) {
      modalities[i].validate();
      for (std::size_t j = 0; j < i; ++j)
        if (modalities[j].name == modalities[i].name) throw ConfigError("duplicate modality '" + modalities[i].name + "'");
    }
  }
};

/// Patch side each modality must be given: its largest scale.
inline int required_patch_size(const ModalityConfig& m) {
  if (m.scales.empty()) throw ConfigError("modality '" + m.name + "' has no scales");
  return *std::max_element(m.scales.begin(), m.scales.end());
}

inline int required_patch_size(const ModelConfig& config, const std::string& modality) {
  return required_patch_size(config.modality(modality));
}

// ---------------------------------------------------------------------------

/// Centered k×k crop of an N×C×P×P tensor (P - k even).
inline Tensor center_crop(const Tensor& x, int k) {
  const int n = x.dim(0), c = x.dim(1), p = x.dim(2);
  if (x.rank() != 4 || x.dim(3) != p) throw ShapeMismatch("center_crop expects square NxCxPxP, got " + x.shape_str());
  if (k > p || (p - k) % 2 != 0) throw ShapeMismatch("cannot center-crop " + std::to_string(k) + " from " + std::to_string(p));
  if (k == p) return x;
  const int off = (p - k) / 2;
  Tensor out({n, c, k, k});
  float* dst = out.data();
  for (int b = 0; b < n * c; ++b) {
    const float* plane = x.data() + static_cast<long>(b) * p * p;
    for (int r = 0; r < k; ++r) {
      const float* src = plane + static_cast<long>(r + off) * p + off;
      dst = std::copy(src, src + k, dst);
    }
  }
  return out;
}

/// Adds a k×k gradient back into the centre of an N×C×P×P gradient.
inline void uncrop_add(const Tensor& g, Tensor& into) {
  const int n = g.dim(0), c = g.dim(1), k = g.dim(2), p = into.dim(2);
  const int off = (p - k) / 2;
  for (int b = 0; b < n * c; ++b) {
    float* plane = into.data() + static_cast<long>(b) * p * p;
    const float* src = g.data() + static_cast<long>(b) * k * k;
    for (int r = 0; r < k; ++r)
      for (int col = 0; col < k; ++col) plane[static_cast<long>(r + off) * p + off + col] += src[r * k + col];
  }
}

/// N×C×H×W (H, W odd) -> N×C vector at the spatial centre.
inline Tensor central_pixel(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 == 0 || x.dim(3) % 2 == 0) {
    throw ShapeMismatch("central-pixel extraction needs odd spatial extent, got " + x.shape_str());
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      out.values[static_cast<long>(b) * c + ch] =
          x.values[((static_cast<long>(b) * c + ch) * h + h / 2) * w + w / 2];
  return out;
}

inline Tensor central_pixel_backward(const Tensor& g, const std::vector<int>& shape) {
  const int n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  Tensor dx(shape);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      dx.values[((static_cast<long>(b) * c + ch) * h + h / 2) * w + w / 2] = g.values[static_cast<long>(b) * c + ch];
  return dx;
}

struct NamedTensor {
  std::string layer;
  std::string kind;
  std::string name;
  Tensor* tensor;
};

/// Encoders -> branches -> central pixel -> Linear(head->projection)+ReLU ->
/// concatenation over all branches of all modalities -> Linear(->species).
/// Each branch runs the shared encoder on the centred crop of its own
/// extent, so the single output pixel sees exactly that window.
class Model {
 public:
  struct Branch {
    BranchPlan plan;
    Sequential layers;
    Sequential projection;
  };

  struct Stream {
    ModalityConfig config;
    Sequential encoder;
    std::vector<Branch> branches;
  };

  struct BranchTrace {
    Sequential::Tape encoder, branch, projection;
    std::vector<int> map_shape;
  };

  /// Everything a backward pass needs from the forward pass.
  struct Trace {
    std::vector<std::vector<BranchTrace>> branches;
    Saved classifier;
    std::vector<std::vector<int>> input_shapes;
    bool valid = false;
  };

  explicit Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    for (const auto& m : config_.modalities) {
      Stream s;
      s.config = m;
      s.encoder = Sequential(m.encoder);
      for (int scale : m.scales) {
        Branch b;
        b.plan = plan_branch(m.encoder_rf, m.encoder_jump, scale, m.encoder_channels(), m.branch_width, m.head_width,
                             m.name);
        b.layers = Sequential(b.plan.layers);
        b.projection = Sequential({LayerSpec::linear(m.head_width, config_.projection_dim), LayerSpec::relu()});
        s.branches.push_back(std::move(b));
      }
      streams_.push_back(std::move(s));
    }
    classifier_ = std::make_unique<Linear>(LayerSpec::linear(config_.fusion_dim(), config_.species_count));
    init(config_.seed);
  }

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<Stream>& streams() const { return streams_; }
  std::vector<Stream>& streams() { return streams_; }
  Linear& classifier() { return *classifier_; }

  void init(std::uint64_t seed) {
    std::uint64_t block = 0;
    for (auto& s : streams_) {
      init_parameters(s.encoder, derive_seed(seed, block++));
      for (auto& b : s.branches) {
        init_parameters(b.layers, derive_seed(seed, block++));
        init_parameters(b.projection, derive_seed(seed, block++));
      }
    }
    Rng rng(derive_seed(seed, block));
    classifier_->init(rng);
  }

  /// Inputs: one N×bands×P×P tensor per modality, P = required_patch_size.
  /// Returns N×S logits.
  Tensor forward_logits(const std::vector<Tensor>& inputs, Mode mode, Trace* trace = nullptr) {
    const Tensor fused = fuse(inputs, mode, trace);
    Tensor logits = classifier_->forward(fused, mode, trace ? &trace->classifier : nullptr);
    if (trace) trace->valid = true;
    return logits;
  }

  Tensor forward(const std::vector<Tensor>& inputs, Mode mode, Trace* trace = nullptr) {
    Tensor p = forward_logits(inputs, mode, trace);
    for (auto& v : p.values) v = sigmoid(v);
    return p;
  }

  /// Pre-fusion head vector (N×head_width) of one branch.
  Tensor branch_features(std::size_t modality, std::size_t branch, const Tensor& input, Mode mode = Mode::Eval) {
    auto& s = streams_.at(modality);
    auto& b = s.branches.at(branch);
    const Tensor crop = center_crop(input, b.plan.target_scale);
    const Tensor map = b.layers.forward(s.encoder.forward(crop, mode), mode);
    return central_pixel(map);
  }

  /// Accumulates parameter gradients from dL/dlogits. When `input_grads`
  /// is non-null it receives dL/dinput per modality.
  void backward(const Tensor& grad_logits, const Trace& trace, std::vector<Tensor>* input_grads = nullptr) {
    if (!trace.valid) throw NoForwardState("model backward without a traced forward pass");
    const Tensor gfused = classifier_->backward(grad_logits, trace.classifier);
    const int n = gfused.dim(0);
    const int fd = gfused.dim(1);
    const int proj = config_.projection_dim;
    if (input_grads) {
      input_grads->clear();
      for (const auto& shape : trace.input_shapes) input_grads->emplace_back(shape);
    }
    int block = 0;
    for (std::size_t m = 0; m < streams_.size(); ++m) {
      auto& s = streams_[m];
      for (std::size_t bi = 0; bi < s.branches.size(); ++bi, ++block) {
        auto& b = s.branches[bi];
        const auto& bt = trace.branches[m][bi];
        Tensor gproj({n, proj});
        for (int r = 0; r < n; ++r)
          std::copy_n(gfused.data() + static_cast<long>(r) * fd + static_cast<long>(block) * proj, proj,
                      gproj.data() + static_cast<long>(r) * proj);
        const Tensor ghead = b.projection.backward(gproj, bt.projection);
        const Tensor gmap = central_pixel_backward(ghead, bt.map_shape);
        const Tensor genc = b.layers.backward(gmap, bt.branch);
        const Tensor gcrop = s.encoder.backward(genc, bt.encoder);
        if (input_grads) uncrop_add(gcrop, (*input_grads)[m]);
      }
    }
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (const auto& nt : named_tensors(false)) out.push_back(nt.tensor);
    return out;
  }

  /// Trainable parameters and (optionally) batch-norm running statistics in
  /// declaration order; this is the checkpoint order.
  std::vector<NamedTensor> named_tensors(bool include_buffers = true) {
    std::vector<NamedTensor> out;
    auto add_stack = [&](const std::string& prefix, Sequential& seq) {
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const std::string layer = prefix + "." + std::to_string(i);
        const char* kind = to_string(seq[i].spec().kind);
        const auto params = seq[i].parameters();
        const bool bn = seq[i].spec().kind == LayerKind::BatchNorm;
        for (std::size_t j = 0; j < params.size(); ++j) {
          out.push_back({layer, kind, bn ? (j == 0 ? "gamma" : "beta") : (j == 0 ? "weight" : "bias"), params[j]});
        }
        if (include_buffers) {
          const auto bufs = seq[i].buffers();
          for (std::size_t j = 0; j < bufs.size(); ++j)
            out.push_back({layer, kind, j == 0 ? "running_mean" : "running_var", bufs[j]});
        }
      }
    };
    for (auto& s : streams_) {
      add_stack(s.config.name + ".encoder", s.encoder);
      for (auto& b : s.branches) {
        const std::string p = s.config.name + ".branch" + std::to_string(b.plan.target_scale);
        add_stack(p, b.layers);
        add_stack(p + ".projection", b.projection);
      }
    }
    out.push_back({"classifier", "Linear", "weight", &classifier_->weight()});
    out.push_back({"classifier", "Linear", "bias", &classifier_->bias()});
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  Tensor fuse(const std::vector<Tensor>& inputs, Mode mode, Trace* trace) {
    if (inputs.size() != streams_.size()) throw ShapeMismatch("expected one input tensor per modality");
    const int n = inputs.empty() ? 0 : inputs[0].dim(0);
    const int proj = config_.projection_dim;
    const int fd = config_.fusion_dim();
    Tensor fused({n, fd});
    if (trace) {
      trace->branches.assign(streams_.size(), {});
      trace->input_shapes.clear();
    }
    int block = 0;
    for (std::size_t m = 0; m < streams_.size(); ++m) {
      auto& s = streams_[m];
      const Tensor& x = inputs[m];
      const int p = required_patch_size(s.config);
      if (x.rank() != 4 || x.dim(0) != n || x.dim(1) != s.config.bands || x.dim(2) != p || x.dim(3) != p) {
        throw ShapeMismatch("modality '" + s.config.name + "' expects Nx" + std::to_string(s.config.bands) + "x" +
                            std::to_string(p) + "x" + std::to_string(p) + ", got " + x.shape_str());
      }
      if (trace) {
        trace->branches[m].resize(s.branches.size());
        trace->input_shapes.push_back(x.shape);
      }
      for (std::size_t bi = 0; bi < s.branches.size(); ++bi, ++block) {
        auto& b = s.branches[bi];
        BranchTrace* bt = trace ? &trace->branches[m][bi] : nullptr;
        const Tensor crop = center_crop(x, b.plan.target_scale);
        const Tensor enc = s.encoder.forward(crop, mode, bt ? &bt->encoder : nullptr);
        const Tensor map = b.layers.forward(enc, mode, bt ? &bt->branch : nullptr);
        if (bt) bt->map_shape = map.shape;
        const Tensor head = central_pixel(map);
        const Tensor z = b.projection.forward(head, mode, bt ? &bt->projection : nullptr);
        for (int r = 0; r < n; ++r)
          std::copy_n(z.data() + static_cast<long>(r) * proj, proj,
                      fused.data() + static_cast<long>(r) * fd + static_cast<long>(block) * proj);
      }
    }
    return fused;
  }

  ModelConfig config_;
  std::vector<Stream> streams_;
  std::unique_ptr<Linear> classifier_;
};

inline Model assemble(const ModelConfig& config) { return Model(config); }

inline Model assemble(ModelConfig config, std::uint64_t seed) {
  config.seed = seed;
  return Model(std::move(config));
}

/// Empirical extent of one branch: the smallest odd w such that replacing
/// every input pixel outside the centred w×w window with fresh random values
/// leaves the branch's head vector bitwise unchanged (eval mode). Monotone in
/// w, so the search is a bisection over odd sizes.
inline int rf_verify(Model& model, std::size_t modality, std::size_t branch, int trials = 6,
                     std::uint64_t seed = 0x5eed) {
  const auto& cfg = model.streams().at(modality).config;
  const int p = required_patch_size(cfg);
  const int bands = cfg.bands;
  Rng rng(seed);
  // Each row starts from its own random patch. Perturbed rows are compared
  // against this unperturbed batch of the same shape: GEMM rounding can
  // depend on a row's position in the batch.
  Tensor reference({trials, bands, p, p});
  for (auto& v : reference.values) v = static_cast<float>(rng.normal());
  const Tensor ref = model.branch_features(modality, branch, reference, Mode::Eval);

  // Small perturbations can lose every max-pool on the way to the centre;
  // huge ones dominate the pools they reach.
  const double amplitude[3] = {3.0, 1e3, 1e6};
  auto unchanged_outside = [&](int w) {
    const int off = (p - w) / 2;
    Tensor batch = reference;
    for (int t = 0; t < trials; ++t)
      for (int b = 0; b < bands; ++b)
        for (int r = 0; r < p; ++r)
          for (int c = 0; c < p; ++c) {
            const bool inside = r >= off && r < off + w && c >= off && c < off + w;
            if (!inside) {
              batch.values[((static_cast<long>(t) * bands + b) * p + r) * p + c] =
                  static_cast<float>(amplitude[t % 3] * rng.normal());
            }
          }
    return model.branch_features(modality, branch, batch, Mode::Eval).values == ref.values;
  };

  // odd sizes 1, 3, ..., p indexed by (w - 1) / 2
  int lo = 0, hi = (p - 1) / 2;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (unchanged_outside(2 * mid + 1)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return 2 * lo + 1;
}

}  // namespace msdm
