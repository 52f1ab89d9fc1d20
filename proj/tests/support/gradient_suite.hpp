#pragma once

// Finite-difference checks over every differentiable op and over the full
// model, as named results. The unit tests assert on them one by one; the
// acceptance run reports the whole suite.

#include <functional>
#include <string>
#include <vector>

#include "oracles/gradcheck.hpp"
#include "support/fixtures.hpp"
#include "triad/model.hpp"
#include "triad/nn.hpp"

namespace triad::fixture {

struct GradCase {
  std::string name;
  oracle::GradCheck result;
  double tolerance = 0.0;

  bool ok() const { return result.relative_error < tolerance; }
};

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kModelGradTolerance = 1e-3;

inline std::vector<GradCase> op_gradient_cases(std::uint64_t seed) {
  using namespace ad;
  using oracle::random_tensor;
  using oracle::weighted_sum;
  std::vector<GradCase> out;
  auto check = [&](const std::string& name, std::vector<Parameter*> ps, std::function<Var(Tape&)> f) {
    out.push_back({name, oracle::gradient_check(ps, f), kOpGradTolerance});
  };
  Rng rng(seed);
  Parameter a("a", random_tensor(3, 4, rng)), b("b", random_tensor(3, 4, rng));
  Parameter row("row", random_tensor(1, 4, rng)), col("col", random_tensor(3, 1, rng));
  Parameter c("c", random_tensor(2, 4, rng)), m("m", random_tensor(4, 2, rng));
  const std::vector<Parameter*> all{&a, &b, &row, &col, &c};

  check("add broadcast row", all, [&](Tape& t) { return weighted_sum(t, add(t.parameter(a), t.parameter(row))); });
  check("sub broadcast col", all, [&](Tape& t) { return weighted_sum(t, sub(t.parameter(col), t.parameter(b))); });
  check("mul", all, [&](Tape& t) { return weighted_sum(t, mul(t.parameter(a), t.parameter(b))); });
  check("mul broadcast col", all, [&](Tape& t) { return weighted_sum(t, mul(t.parameter(a), t.parameter(col))); });
  check("mul self", all, [&](Tape& t) { return weighted_sum(t, mul(t.parameter(a), t.parameter(a))); });
  check("scale", all, [&](Tape& t) { return weighted_sum(t, scale(t.parameter(b), -2.5)); });
  check("tanh", all, [&](Tape& t) { return weighted_sum(t, tanh(t.parameter(a))); });
  check("sigmoid", all, [&](Tape& t) { return weighted_sum(t, sigmoid(t.parameter(b))); });
  check("matmul", {&a, &m}, [&](Tape& t) { return weighted_sum(t, matmul(t.parameter(a), t.parameter(m))); });

  check("concat cols", all, [&](Tape& t) { return weighted_sum(t, concat({t.parameter(a), t.parameter(b)}, 1)); });
  check("concat rows", all,
        [&](Tape& t) { return weighted_sum(t, concat({t.parameter(a), t.parameter(c), t.parameter(a)}, 0)); });
  check("sum_n", all,
        [&](Tape& t) { return weighted_sum(t, sum_n({t.parameter(a), t.parameter(b), t.parameter(a)})); });
  check("transpose", all, [&](Tape& t) { return weighted_sum(t, transpose(t.parameter(c))); });
  check("slice_cols", all, [&](Tape& t) { return weighted_sum(t, slice_cols(t.parameter(a), 1, 2)); });
  check("gather_rows", all, [&](Tape& t) { return weighted_sum(t, gather_rows(t.parameter(a), {2, 0, 2, 1})); });
  check("blend_rows", all, [&](Tape& t) {
    Tensor keep(3, 1, std::vector<double>{1, 0, 1});
    return weighted_sum(t, blend_rows(keep, t.parameter(a), t.parameter(b)));
  });

  Parameter s("s", random_tensor(3, 5, rng, -2, 2));
  Parameter p("p", random_tensor(2, 3, rng, 0.05, 0.95));
  Parameter tall("tall", random_tensor(6, 2, rng));
  const Tensor mask(1, 5, std::vector<double>{1, 1, 0, 1, 0});
  const std::vector<std::uint8_t> rows{1, 0, 1}, blocks{1, 1, 0, 0, 1, 1};
  const Tensor labels(2, 3, std::vector<double>{1, 0, 1, 0, 0, 1});
  check("softmax", {&s}, [&](Tape& t) { return weighted_sum(t, softmax(t.parameter(s))); });
  check("softmax masked", {&s}, [&](Tape& t) { return weighted_sum(t, softmax(t.parameter(s), &mask)); });
  check("masked_mean", {&s}, [&](Tape& t) { return weighted_sum(t, masked_mean(t.parameter(s), rows)); });
  check("block_masked_mean", {&tall},
        [&](Tape& t) { return weighted_sum(t, block_masked_mean(t.parameter(tall), 3, blocks)); });
  check("dropout", {&s}, [&](Tape& t) {
    Rng drop(7);  // same mask on every evaluation
    return weighted_sum(t, dropout(t.parameter(s), 0.4, true, drop));
  });
  check("bce_loss", {&p}, [&](Tape& t) { return bce_loss(t.parameter(p), labels); });

  ParameterStore store;
  BiLstm lstm = BiLstm::create(store, "lstm", 3, 4, rng);
  Parameter x("x", random_tensor(5, 3, rng));
  const std::vector<std::uint8_t> seq_mask{0, 1, 1, 1, 0};
  std::vector<Parameter*> lstm_params{&x};
  for (std::size_t i = 0; i < store.size(); ++i) lstm_params.push_back(&store[i]);
  check("bilstm", lstm_params,
        [&](Tape& t) { return weighted_sum(t, bilstm_forward(t, lstm, t.parameter(x), seq_mask)); });
  return out;
}

// Triad and dyad losses on the tiny configuration, every parameter checked.
inline std::vector<GradCase> model_gradient_cases() {
  const TriadModelConfig cfg = tiny_config();
  const Setup setup = make_setup(small_synth(2), cfg.word_emb_dim);
  const Document& doc = setup.docs[0];
  std::vector<GradCase> out;
  for (auto kind : {ModelKind::triad, ModelKind::dyad}) {
    CorefModel m(kind, cfg, setup.embeddings.rows(), setup.pos.size(), 21);
    m.set_word_vectors(setup.embeddings);
    ModelBatch b = kind == ModelKind::triad ? batch_for(setup, doc, {{0, 1, 2}, {1, 4, 3}}, cfg.features)
                                            : batch_for(setup, doc, {{0, 1, 0}, {4, 3, 0}}, cfg.features, 2);
    std::vector<ad::Parameter*> params;
    for (std::size_t i = 0; i < m.params().size(); ++i) params.push_back(&m.params()[i]);
    Rng rng(0);
    out.push_back({"full " + to_string(kind) + " model",
                   oracle::gradient_check(params, [&](ad::Tape& t) { return m.loss(t, b, false, rng); }),
                   kModelGradTolerance});
  }
  return out;
}

}  // namespace triad::fixture
