#include "sloop/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "sloop/error.hpp"
#include "sloop/rng.hpp"

namespace sloop {

namespace {

using M = PrimedCnnModel;
constexpr int kS0 = M::kSide;            // 32
constexpr int kS1 = kS0 - M::kK + 1;     // 30
constexpr int kS2 = kS1 - M::kK + 1;     // 28

// Valid 3x3 convolution (cross-correlation) of `in` (cin x s x s).
void conv_forward(const double* in, int cin, int s, const double* w, const double* b, int cout, double* out) {
  const int so = s - M::kK + 1;
  for (int o = 0; o < cout; ++o) {
    double* op = out + static_cast<std::size_t>(o) * so * so;
    std::fill(op, op + so * so, b[o]);
    for (int c = 0; c < cin; ++c) {
      const double* ip = in + static_cast<std::size_t>(c) * s * s;
      const double* wk = w + (static_cast<std::size_t>(o) * cin + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wk[ky * 3 + kx];
          for (int y = 0; y < so; ++y) {
            const double* row = ip + (y + ky) * s + kx;
            double* orow = op + y * so;
            for (int x = 0; x < so; ++x) orow[x] += wv * row[x];
          }
        }
      }
    }
  }
}

struct Activations {
  std::vector<double> a1 = std::vector<double>(M::kCh * kS1 * kS1);  // post-ReLU
  std::vector<double> a2 = std::vector<double>(M::kCh * kS2 * kS2);
  std::array<double, M::kCh> pooled{};
  double prob = 0.5;
  double logit = 0.0;
};

void forward(const M& m, const CnnInput& input, Activations& act) {
  conv_forward(input.data.data(), M::kIn, kS0, m.w1.data(), m.b1.data(), M::kCh, act.a1.data());
  for (auto& v : act.a1) v = std::max(0.0, v);
  conv_forward(act.a1.data(), M::kCh, kS1, m.w2.data(), m.b2.data(), M::kCh, act.a2.data());
  for (auto& v : act.a2) v = std::max(0.0, v);
  double z = m.b3;
  for (int o = 0; o < M::kCh; ++o) {
    const double* p = act.a2.data() + static_cast<std::size_t>(o) * kS2 * kS2;
    act.pooled[o] = std::accumulate(p, p + kS2 * kS2, 0.0) / (kS2 * kS2);
    z += m.w3[o] * act.pooled[o];
  }
  act.logit = z;
  act.prob = 1.0 / (1.0 + std::exp(-z));
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::vector<double> PrimedCnnModel::flatten() const {
  std::vector<double> f;
  f.reserve(parameter_count());
  f.insert(f.end(), w1.begin(), w1.end());
  f.insert(f.end(), b1.begin(), b1.end());
  f.insert(f.end(), w2.begin(), w2.end());
  f.insert(f.end(), b2.begin(), b2.end());
  f.insert(f.end(), w3.begin(), w3.end());
  f.push_back(b3);
  return f;
}

void PrimedCnnModel::unflatten(const std::vector<double>& f) {
  if (f.size() != parameter_count()) throw validation_error("cnn: parameter vector has wrong length");
  auto it = f.begin();
  for (auto* part : {&w1, &b1, &w2, &b2, &w3}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(part->size()), part->begin());
    it += static_cast<std::ptrdiff_t>(part->size());
  }
  b3 = *it;
}

PrimedCnnModel PrimedCnnModel::random(std::uint64_t seed) {
  Rng rng(seed);
  PrimedCnnModel m;
  const double l1 = std::sqrt(6.0 / (kIn * kK * kK));
  const double l2 = std::sqrt(6.0 / (kCh * kK * kK));
  const double l3 = std::sqrt(6.0 / kCh);
  for (auto& w : m.w1) w = rng.uniform(-l1, l1);
  for (auto& w : m.w2) w = rng.uniform(-l2, l2);
  for (auto& w : m.w3) w = rng.uniform(-l3, l3);
  for (auto& b : m.b1) b = 0.01;
  for (auto& b : m.b2) b = 0.01;
  m.b3 = 0.0;
  return m;
}

CnnInput make_cnn_input(const Grid& div_map, const Grid& nbe_map) {
  if (div_map.empty() || nbe_map.empty()) throw validation_error("cnn: empty input map");
  const Grid d = resize(div_map, kS0, kS0);
  const Grid e = resize(nbe_map, kS0, kS0);
  CnnInput in;
  std::copy(d.values().begin(), d.values().end(), in.data.begin());
  std::copy(e.values().begin(), e.values().end(), in.data.begin() + kS0 * kS0);
  return in;
}

double primed_cnn_forward(const PrimedCnnModel& model, const CnnInput& input) {
  if (input.data.size() != static_cast<std::size_t>(M::kIn * kS0 * kS0)) {
    throw validation_error("cnn: input must be 2 x 32 x 32");
  }
  Activations act;
  forward(model, input, act);
  return act.prob;
}

double primed_cnn_forward(const PrimedCnnModel& model, const Grid& div_map, const Grid& nbe_map) {
  if (div_map.height() != kS0 || div_map.width() != kS0 || nbe_map.height() != kS0 || nbe_map.width() != kS0) {
    throw validation_error("cnn: maps must be resampled to 32x32");
  }
  return primed_cnn_forward(model, make_cnn_input(div_map, nbe_map));
}

double primed_cnn_loss_and_grad(const PrimedCnnModel& m, const CnnInput& input, int label,
                                std::vector<double>& grad) {
  Activations act;
  forward(m, input, act);
  const double y = label ? 1.0 : 0.0;
  // BCE in logit form: y*softplus(-z) + (1-y)*softplus(z).
  const double loss = y * softplus(-act.logit) + (1.0 - y) * softplus(act.logit);

  grad.assign(M::parameter_count(), 0.0);
  const std::size_t o_w1 = 0;
  const std::size_t o_b1 = o_w1 + m.w1.size();
  const std::size_t o_w2 = o_b1 + m.b1.size();
  const std::size_t o_b2 = o_w2 + m.w2.size();
  const std::size_t o_w3 = o_b2 + m.b2.size();
  const std::size_t o_b3 = o_w3 + m.w3.size();

  const double dz3 = act.prob - y;
  grad[o_b3] = dz3;
  for (int o = 0; o < M::kCh; ++o) grad[o_w3 + o] = dz3 * act.pooled[o];

  // Through the pool and second ReLU.
  std::vector<double> dz2(act.a2.size());
  for (int o = 0; o < M::kCh; ++o) {
    const double g = dz3 * m.w3[o] / (kS2 * kS2);
    for (int i = 0; i < kS2 * kS2; ++i) {
      const std::size_t k = static_cast<std::size_t>(o) * kS2 * kS2 + i;
      dz2[k] = act.a2[k] > 0.0 ? g : 0.0;
    }
  }
  std::vector<double> da1(act.a1.size(), 0.0);
  for (int o = 0; o < M::kCh; ++o) {
    const double* dz = dz2.data() + static_cast<std::size_t>(o) * kS2 * kS2;
    grad[o_b2 + o] = std::accumulate(dz, dz + kS2 * kS2, 0.0);
    for (int c = 0; c < M::kCh; ++c) {
      const double* a = act.a1.data() + static_cast<std::size_t>(c) * kS1 * kS1;
      double* da = da1.data() + static_cast<std::size_t>(c) * kS1 * kS1;
      const std::size_t wbase = (static_cast<std::size_t>(o) * M::kCh + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = m.w2[wbase + ky * 3 + kx];
          double gw = 0.0;
          for (int y = 0; y < kS2; ++y) {
            const double* arow = a + (y + ky) * kS1 + kx;
            double* darow = da + (y + ky) * kS1 + kx;
            const double* drow = dz + y * kS2;
            for (int x = 0; x < kS2; ++x) {
              gw += drow[x] * arow[x];
              darow[x] += drow[x] * wv;
            }
          }
          grad[o_w2 + wbase + ky * 3 + kx] = gw;
        }
      }
    }
  }
  // First ReLU.
  for (std::size_t k = 0; k < da1.size(); ++k) {
    if (act.a1[k] <= 0.0) da1[k] = 0.0;
  }
  for (int o = 0; o < M::kCh; ++o) {
    const double* dz = da1.data() + static_cast<std::size_t>(o) * kS1 * kS1;
    grad[o_b1 + o] = std::accumulate(dz, dz + kS1 * kS1, 0.0);
    for (int c = 0; c < M::kIn; ++c) {
      const double* x = input.data.data() + static_cast<std::size_t>(c) * kS0 * kS0;
      const std::size_t wbase = (static_cast<std::size_t>(o) * M::kIn + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double gw = 0.0;
          for (int y = 0; y < kS1; ++y) {
            const double* xrow = x + (y + ky) * kS0 + kx;
            const double* drow = dz + y * kS1;
            for (int xx = 0; xx < kS1; ++xx) gw += drow[xx] * xrow[xx];
          }
          grad[o_w1 + wbase + ky * 3 + kx] = gw;
        }
      }
    }
  }
  return loss;
}

std::vector<std::uint8_t> primed_cnn_relu_pattern(const PrimedCnnModel& m, const CnnInput& input) {
  Activations act;
  forward(m, input, act);
  std::vector<std::uint8_t> out;
  out.reserve(act.a1.size() + act.a2.size());
  for (double v : act.a1) out.push_back(v > 0.0);
  for (double v : act.a2) out.push_back(v > 0.0);
  return out;
}

double primed_cnn_mean_loss(const PrimedCnnModel& model, const std::vector<CnnExample>& examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  Activations act;
  for (const auto& ex : examples) {
    forward(model, ex.input, act);
    total += ex.label ? softplus(-act.logit) : softplus(act.logit);
  }
  return total / static_cast<double>(examples.size());
}

PrimedCnnModel primed_cnn_train_from(PrimedCnnModel model, const std::vector<CnnExample>& examples,
                                     const CnnHyper& hyper, CnnTrainReport* report) {
  const bool has_pos = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.label == 1; });
  const bool has_neg = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.label == 0; });
  if (!has_pos || !has_neg) throw validation_error("primed_cnn_train: need both classes");
  if (hyper.batch < 1 || hyper.epochs < 0 || hyper.lr < 0.0) throw validation_error("primed_cnn_train: bad hyper-parameters");

  Rng rng(derive_seed(hyper.seed, 0x7472));
  std::vector<double> params = model.flatten();
  const std::size_t n = params.size();
  std::vector<double> m1(n, 0.0), m2(n, 0.0), grad, acc(n);
  constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  long step = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        primed_cnn_loss_and_grad(model, examples[order[i]].input, examples[order[i]].label, grad);
        for (std::size_t k = 0; k < n; ++k) acc[k] += grad[k];
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(kB1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kB2, static_cast<double>(step));
      for (std::size_t k = 0; k < n; ++k) {
        const double g = acc[k] * inv;
        m1[k] = kB1 * m1[k] + (1.0 - kB1) * g;
        m2[k] = kB2 * m2[k] + (1.0 - kB2) * g * g;
        params[k] -= hyper.lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + kEps);
      }
      model.unflatten(params);
    }
    if (report) report->epoch_loss.push_back(primed_cnn_mean_loss(model, examples));
  }
  return model;
}

PrimedCnnModel primed_cnn_train(const std::vector<CnnExample>& examples, const CnnHyper& hyper,
                                CnnTrainReport* report) {
  return primed_cnn_train_from(PrimedCnnModel::random(derive_seed(hyper.seed, 0x696e6974)), examples, hyper, report);
}

std::string serialize_model(const PrimedCnnModel& model) {
  nlohmann::json j;
  j["version"] = PrimedCnnModel::kVersion;
  j["parameter_count"] = PrimedCnnModel::parameter_count();
  j["parameters"] = model.flatten();
  return j.dump();
}

PrimedCnnModel deserialize_model(const std::string& text) {
  nlohmann::json j;
  std::vector<double> params;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != PrimedCnnModel::kVersion) throw validation_error("cnn: model version mismatch");
    params = j.at("parameters").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("cnn: bad model document: ") + e.what());
  }
  PrimedCnnModel m;
  m.unflatten(params);
  return m;
}

}  // namespace sloop
