#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "triad/autodiff.hpp"
#include "triad/error.hpp"
#include "triad/rng.hpp"

namespace triad::ad {

// Owns every trainable tensor of a model, in registration order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (find(name)) throw ModelError("duplicate parameter name " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    return *params_.back();
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  Parameter& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw ModelError("unknown parameter " + name);
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
      for (double g : p->grad.values()) s += g * g;
    return std::sqrt(s);
  }

  void scale_grad(double f) {
    for (auto& p : params_)
      for (double& g : p->grad.values()) g *= f;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Uniform +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

// y = x W + b
struct Dense {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Dense create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Dense d;
    d.weight = &store.add(name + ".weight", glorot_uniform(in, out, rng));
    d.bias = &store.add(name + ".bias", Tensor(1, out));
    return d;
  }

  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }

  Var operator()(Tape& tape, Var x) const { return add(matmul(x, tape.parameter(*weight)), tape.parameter(*bias)); }
};

// One LSTM direction; gate columns ordered [input, forget, candidate, output].
struct LstmDirection {
  Parameter* input_weight = nullptr;      // d_in x 4h
  Parameter* recurrent_weight = nullptr;  // h x 4h
  Parameter* bias = nullptr;              // 1 x 4h, forget slice starts at +1

  static LstmDirection create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                              Rng& rng) {
    LstmDirection d;
    d.input_weight = &store.add(name + ".wx", glorot_uniform(in, 4 * hidden, rng));
    d.recurrent_weight = &store.add(name + ".wh", glorot_uniform(hidden, 4 * hidden, rng));
    Tensor b(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
    d.bias = &store.add(name + ".b", std::move(b));
    return d;
  }

  std::size_t hidden() const { return recurrent_weight->value.rows(); }
};

struct BiLstm {
  LstmDirection forward;
  LstmDirection backward;

  static BiLstm create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
    return BiLstm{LstmDirection::create(store, name + ".fwd", in, hidden, rng),
                  LstmDirection::create(store, name + ".bwd", in, hidden, rng)};
  }

  std::size_t hidden() const { return forward.hidden(); }
};

namespace detail {

// Runs one direction over `steps` (each B x d_in); masks are B x 1 columns.
// Masked rows keep their previous state and emit zeros.
inline std::vector<Var> run_direction(Tape& tape, const LstmDirection& dir, const std::vector<Var>& steps,
                                      const std::vector<Tensor>& masks, bool reverse) {
  const std::size_t T = steps.size();
  const std::size_t B = steps.front().rows();
  const std::size_t h = dir.hidden();
  Var wx = tape.parameter(*dir.input_weight);
  Var wh = tape.parameter(*dir.recurrent_weight);
  Var b = tape.parameter(*dir.bias);
  Var state_h = tape.constant(Tensor(B, h));
  Var state_c = tape.constant(Tensor(B, h));
  Var zeros = state_h;
  std::vector<Var> out(T);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    Var z = add(add(matmul(steps[t], wx), matmul(state_h, wh)), b);
    Var i = sigmoid(slice_cols(z, 0, h));
    Var f = sigmoid(slice_cols(z, h, h));
    Var g = tanh(slice_cols(z, 2 * h, h));
    Var o = sigmoid(slice_cols(z, 3 * h, h));
    Var c_new = add(mul(f, state_c), mul(i, g));
    Var h_new = mul(o, tanh(c_new));
    state_c = blend_rows(masks[t], c_new, state_c);
    state_h = blend_rows(masks[t], h_new, state_h);
    out[t] = blend_rows(masks[t], h_new, zeros);
  }
  return out;
}

}  // namespace detail

// Batched bidirectional LSTM. `steps[t]` is B x d_in for time t and
// `masks[t]` the B x 1 column of 0/1 flags. Returns per-step B x 2h outputs
// (forward half first).
inline std::vector<Var> bilstm_forward(Tape& tape, const BiLstm& lstm, const std::vector<Var>& steps,
                                       const std::vector<Tensor>& masks) {
  if (steps.empty()) throw ModelError("bilstm_forward: empty sequence");
  if (masks.size() != steps.size()) throw ModelError("bilstm_forward: mask count differs from step count");
  for (std::size_t t = 0; t < steps.size(); ++t)
    if (masks[t].rows() != steps[t].rows() || masks[t].cols() != 1)
      throw ModelError("bilstm_forward: mask " + masks[t].shape_str() + " does not fit step " +
                       steps[t].value().shape_str());
  auto fwd = detail::run_direction(tape, lstm.forward, steps, masks, false);
  auto bwd = detail::run_direction(tape, lstm.backward, steps, masks, true);
  std::vector<Var> out(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) out[t] = concat({fwd[t], bwd[t]}, 1);
  return out;
}

// Single sequence: inputs T x d_in, mask of length T. Returns T x 2h.
inline Var bilstm_forward(Tape& tape, const BiLstm& lstm, Var inputs, std::span<const std::uint8_t> mask) {
  const std::size_t T = inputs.rows();
  if (T == 0) throw ModelError("bilstm_forward: empty sequence");
  if (mask.size() != T) throw ModelError("bilstm_forward: mask length differs from sequence length");
  std::vector<Var> steps(T);
  std::vector<Tensor> masks(T);
  for (std::size_t t = 0; t < T; ++t) {
    steps[t] = gather_rows(inputs, {t});
    masks[t] = Tensor(1, 1, mask[t] ? 1.0 : 0.0);
  }
  auto out = bilstm_forward(tape, lstm, steps, masks);
  return concat(std::span<const Var>(out), 0);
}

// ---------------------------------------------------------------------------

// Bias-corrected Adam; one step counter per optimizer instance.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  std::uint64_t steps() const noexcept { return step_; }
  void set_steps(std::uint64_t s) noexcept { step_ = s; }

  void step(ParameterStore& store, double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < store.size(); ++k) {
      Parameter& p = store[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g;
        p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g * g;
        const double mhat = p.m[i] / c1;
        const double vhat = p.v[i] / c2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
      }
    }
  }

 private:
  std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint container: "TRIADCKP", u32 version, u32 entry count, then per
// entry u32 name length, name bytes, u32 rank, u64 dims, f64 values. All
// integers and floats little-endian.

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'I', 'A', 'D', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace io_detail {

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace io_detail

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline void write_tensors(std::ostream& out, const std::vector<NamedTensor>& entries) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  io_detail::put<std::uint32_t>(out, kCheckpointVersion);
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    io_detail::put<std::uint32_t>(out, 2);
    io_detail::put<std::uint64_t>(out, e.tensor.rows());
    io_detail::put<std::uint64_t>(out, e.tensor.cols());
    for (double v : e.tensor.values()) io_detail::put<double>(out, v);
  }
}

inline std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  const auto version = io_detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = io_detail::get<std::uint32_t>(in);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = io_detail::get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("checkpoint truncated");
    const auto rank = io_detail::get<std::uint32_t>(in);
    if (rank == 0 || rank > 2) throw DataError("checkpoint entry " + name + " has unsupported rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r) dims[r + (rank == 1 ? 1 : 0)] = io_detail::get<std::uint64_t>(in);
    std::vector<double> values(dims[0] * dims[1]);
    for (double& v : values) v = io_detail::get<double>(in);
    out.push_back({std::move(name), Tensor(dims[0], dims[1], std::move(values))});
  }
  return out;
}

// Parameter values, in store order.
inline std::vector<NamedTensor> snapshot_values(const ParameterStore& store) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back({store[i].name, store[i].value});
  return out;
}

// Adam moments, named "<param>.adam_m" / "<param>.adam_v".
inline std::vector<NamedTensor> snapshot_moments(const ParameterStore& store) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    out.push_back({store[i].name + ".adam_m", store[i].m});
    out.push_back({store[i].name + ".adam_v", store[i].v});
  }
  return out;
}

// Copies stored tensors into the matching parameters. Every parameter must be
// present with its exact shape.
inline void restore_values(ParameterStore& store, const std::vector<NamedTensor>& entries) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    auto it = std::find_if(entries.begin(), entries.end(), [&](const NamedTensor& e) { return e.name == p.name; });
    if (it == entries.end()) throw ModelError("checkpoint lacks parameter " + p.name);
    if (!it->tensor.same_shape(p.value))
      throw ModelError("checkpoint parameter " + p.name + " has shape " + it->tensor.shape_str() + ", expected " +
                       p.value.shape_str());
    p.value = it->tensor;
  }
}

inline void restore_moments(ParameterStore& store, const std::vector<NamedTensor>& entries) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    for (auto [suffix, target] : {std::pair<const char*, Tensor*>{".adam_m", &p.m}, {".adam_v", &p.v}}) {
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const NamedTensor& e) { return e.name == p.name + suffix; });
      if (it == entries.end() || !it->tensor.same_shape(p.value))
        throw ModelError("training state lacks moments for " + p.name);
      *target = it->tensor;
    }
  }
}

}  // namespace triad::ad
