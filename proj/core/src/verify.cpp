#include "lano/verify.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "lano/checkpoint.hpp"
#include "lano/error.hpp"
#include "lano/kernel_oracle.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/ops.hpp"
#include "lano/pdegen.hpp"
#include "lano/rng.hpp"
#include "lano/training.hpp"

namespace lano {

namespace {

using D = Tensor<double>;

D random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  D t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

template <typename F>
VerifyCheck timed(const std::string& name, double threshold, F&& body) {
  VerifyCheck c;
  c.name = name;
  c.threshold = threshold;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(c);
    c.passed = std::isfinite(c.metric) && c.metric <= threshold;
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail = std::string("exception: ") + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

double norm_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Worst input-wise relative error between the tape gradient and central
// differences of loss = sum(fn(inputs) * r) for a fixed random r.
double gradient_error(std::vector<D> inputs, const std::function<D(const std::vector<D>&)>& fn, Rng& rng,
                      double h = 1e-6) {
  D weights;
  {
    NoGradScope<double> off(nullptr);
    const auto out = fn(inputs);
    weights = random_tensor(rng, out.shape());
  }
  auto loss_of = [&](const std::vector<D>& xs) { return sum(fn(xs) * weights); };
  for (auto& x : inputs) x.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(loss_of(inputs));
  }
  double worst = 0.0;
  NoGradScope<double> off(nullptr);
  for (auto& x : inputs) {
    std::vector<double> analytic(x.grad().begin(), x.grad().end()), numeric(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double keep = x[i];
      x[i] = keep + h;
      const double up = loss_of(inputs).item();
      x[i] = keep - h;
      const double down = loss_of(inputs).item();
      x[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, norm_rel(analytic, numeric));
  }
  return worst;
}

std::filesystem::path scratch(const VerifyOptions& o, const std::string& tag) {
  auto base = o.scratch_dir.empty() ? std::filesystem::temp_directory_path() : o.scratch_dir;
  auto dir = base / ("lano-verify-" + std::to_string(::getpid()) + "-" + tag);
  std::filesystem::create_directories(dir);
  return dir;
}

ModelConfig gradient_config() {
  ModelConfig c;
  c.layers = 2;
  c.channels = 16;
  c.heads = 2;
  c.latent_tokens = 4;
  c.history = 2;
  c.physical_channels = 2;
  return c;
}

}  // namespace

VerifyCheck check_primitive_gradients(const VerifyOptions& o) {
  return timed("primitive_gradients", 1e-6, [&](VerifyCheck& c) {
    Rng rng(mix_seed(o.seed, 11));
    struct Case {
      const char* name;
      std::vector<D> in;
      std::function<D(const std::vector<D>&)> fn;
      double tol;
    };
    std::vector<Case> cases;
    auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(rng, std::move(s), lo, hi); };
    cases.push_back({"add", {r({2, 1, 3}), r({4, 1})}, [](auto& x) { return add(x[0], x[1]); }, 1e-6});
    cases.push_back({"sub", {r({3, 4}), r({4})}, [](auto& x) { return sub(x[0], x[1]); }, 1e-6});
    cases.push_back({"mul", {r({3, 4}), r({3, 1})}, [](auto& x) { return mul(x[0], x[1]); }, 1e-6});
    cases.push_back({"div", {r({3, 4}), r({4}, 0.5, 2.0)}, [](auto& x) { return div(x[0], x[1]); }, 1e-6});
    cases.push_back({"add_scalar", {r({5})}, [](auto& x) { return add_scalar(x[0], 0.7); }, 1e-6});
    cases.push_back({"scale", {r({5})}, [](auto& x) { return scale(x[0], -1.3); }, 1e-6});
    cases.push_back({"abs", {r({6}, 0.2, 1.0)}, [](auto& x) { return abs(scale(x[0], -1.0)); }, 1e-6});
    cases.push_back({"square", {r({6})}, [](auto& x) { return square(x[0]); }, 1e-6});
    cases.push_back({"gelu", {r({8}, -3.0, 3.0)}, [](auto& x) { return gelu(x[0]); }, 1e-6});
    cases.push_back({"matmul", {r({3, 4}), r({4, 5})}, [](auto& x) { return matmul(x[0], x[1]); }, 1e-6});
    cases.push_back({"matmul_ta", {r({4, 3}), r({4, 5})}, [](auto& x) { return matmul(x[0], x[1], true); }, 1e-6});
    cases.push_back({"matmul_tb", {r({3, 4}), r({5, 4})}, [](auto& x) { return matmul(x[0], x[1], false, true); }, 1e-6});
    cases.push_back({"matmul_batch", {r({2, 3, 4}), r({2, 4, 5})}, [](auto& x) { return matmul(x[0], x[1]); }, 1e-6});
    cases.push_back({"matmul_bcast_a", {r({3, 4}), r({2, 4, 5})}, [](auto& x) { return matmul(x[0], x[1]); }, 1e-6});
    cases.push_back({"matmul_bcast_b", {r({2, 4, 3}), r({5, 4})},
                     [](auto& x) { return matmul(x[0], x[1], true, true); }, 1e-6});
    cases.push_back({"linear", {r({5, 3}), r({3, 4}), r({4})},
                     [](auto& x) { return linear(x[0], x[1], x[2]); }, 1e-6});
    cases.push_back({"linear_nobias", {r({5, 3}), r({3, 4})},
                     [](auto& x) { return linear(x[0], x[1], D()); }, 1e-6});
    cases.push_back({"softmax0", {r({3, 4}, -5.0, 5.0)}, [](auto& x) { return softmax(x[0], 0); }, 1e-4});
    cases.push_back({"softmax1", {r({2, 3, 4}, -5.0, 5.0)}, [](auto& x) { return softmax(x[0], 2); }, 1e-4});
    cases.push_back({"layer_norm", {r({4, 6}), r({6}), r({6})},
                     [](auto& x) { return layer_norm(x[0], x[1], x[2]); }, 1e-6});
    cases.push_back({"sum", {r({3, 4})}, [](auto& x) { return sum(x[0]); }, 1e-6});
    cases.push_back({"sum_axis", {r({3, 4, 2})}, [](auto& x) { return sum(x[0], 1, false); }, 1e-6});
    cases.push_back({"mean", {r({3, 4})}, [](auto& x) { return mean(x[0]); }, 1e-6});
    cases.push_back({"mean_axis", {r({3, 4})}, [](auto& x) { return mean(x[0], 0, true); }, 1e-6});
    cases.push_back({"reshape", {r({3, 4})}, [](auto& x) { return reshape(x[0], {2, 6}); }, 1e-6});
    cases.push_back({"permute", {r({2, 3, 4})}, [](auto& x) { return permute(x[0], {2, 0, 1}); }, 1e-6});
    cases.push_back({"transpose", {r({2, 3, 4})}, [](auto& x) { return transpose(x[0], 0, 2); }, 1e-6});
    cases.push_back({"concat", {r({2, 3}), r({2, 2})}, [](auto& x) { return concat<double>({x[0], x[1]}, 1); }, 1e-6});
    {
      D m({3, 1}, std::vector<double>{1.0, 0.0, 1.0});
      cases.push_back({"masked_fill", {r({3, 4})}, [m](auto& x) { return masked_fill(x[0], m, 2.5); }, 1e-6});
    }
    cases.push_back({"conv2d", {r({4, 5, 6}), r({4, 2, 3, 3}), r({4})},
                     [](auto& x) { return conv2d(x[0], x[1], x[2], 2, 1); }, 1e-6});
    cases.push_back({"conv2d_depthwise", {r({3, 4, 4}), r({3, 1, 3, 3})},
                     [](auto& x) { return conv2d(x[0], x[1], D(), 3, 1); }, 1e-6});

    // Metric is error / tolerance so that one threshold of 1 covers both.
    double worst = 0.0;
    std::string worst_name;
    for (auto& cs : cases) {
      const double e = gradient_error(cs.in, cs.fn, rng) / cs.tol;
      if (e > worst) {
        worst = e;
        worst_name = cs.name;
      }
    }
    c.metric = worst * 1e-6;
    c.detail = std::to_string(cases.size()) + " primitives; worst " + worst_name;
  });
}

VerifyCheck check_matmul_oracle(const VerifyOptions& o) {
  return timed("matmul_oracle", 1e-12, [&](VerifyCheck& c) {
    Rng rng(mix_seed(o.seed, 12));
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {3, 4});
    auto p = matmul(a, b);
    if (p.shape() != Shape{2, 4}) throw ShapeError("matmul oracle: unexpected shape " + shape_string(p.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 4 + j];
        worst = std::max(worst, std::abs(s - p[i * 4 + j]));
      }
    }
    c.metric = worst;
    c.detail = "(2x3)(3x4) against triple loop";
  });
}

VerifyCheck check_model_gradients(const VerifyOptions& o) {
  return timed("model_gradients", 1e-4, [&](VerifyCheck& c) {
    const auto cfg = gradient_config();
    const std::size_t Hg = 8, Wg = 8, N = Hg * Wg;
    auto params = init_params<double>(cfg, mix_seed(o.seed, 21), InitOptions{true});
    Rng rng(mix_seed(o.seed, 22));
    std::vector<double> frames(cfg.history * N * cfg.physical_channels);
    for (auto& v : frames) v = rng.normal();
    auto target = random_tensor(rng, {N, cfg.physical_channels});
    const auto mask = gen_patchwise_mask(Hg, Wg, 0.25, 2, mix_seed(o.seed, 23));
    const auto aug = mpt_augment(mask, 0.3, mix_seed(o.seed, 24));
    const double lambda = 0.1;

    D clean;
    {
      NoGradScope<double> off(nullptr);
      clean = lano_forward(Hg, Wg, frames, mask.bits, params, cfg);
    }
    auto loss_at = [&]() {
      return mpt_loss(params, cfg, Hg, Wg, frames, target, mask.bits, aug.augmented.bits, lambda, clean);
    };
    params.set_requires_grad(true);
    {
      GradientTape<double> tape;
      TapeScope<double> scope(tape);
      tape.backward(loss_at());
    }
    const double h = 1e-5;
    double worst = 0.0;
    std::string worst_name;
    std::size_t groups = 0;
    NoGradScope<double> off(nullptr);
    for (auto& [name, t] : params.named()) {
      std::vector<double> analytic(t->grad().begin(), t->grad().end()), numeric(t->numel());
      for (std::size_t i = 0; i < t->numel(); ++i) {
        const double keep = (*t)[i];
        (*t)[i] = keep + h;
        const double up = loss_at().item();
        (*t)[i] = keep - h;
        const double down = loss_at().item();
        (*t)[i] = keep;
        numeric[i] = (up - down) / (2.0 * h);
      }
      const double e = norm_rel(analytic, numeric);
      ++groups;
      if (e > worst) {
        worst = e;
        worst_name = name;
      }
    }
    c.metric = worst;
    c.detail = std::to_string(groups) + " parameter groups; worst " + worst_name;
  });
}

namespace {

struct KernelCase {
  ModelConfig cfg;
  std::size_t height, width;
};

double kernel_instances(const VerifyOptions& o, bool attention, std::size_t count, std::string& detail) {
  Rng rng(mix_seed(o.seed, attention ? 32 : 31));
  double worst = 0.0;
  std::size_t column_violations = 0, identity_violations = 0;
  for (std::size_t inst = 0; inst < count; ++inst) {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = std::size_t{1} << rng.uniform_index(3);
    cfg.channels = cfg.heads * (2 + rng.uniform_index(4));
    cfg.latent_tokens = 1 + rng.uniform_index(8);
    cfg.history = 1;
    cfg.token_mixer = attention ? TokenMixer::attention : TokenMixer::none;
    cfg.variant = rng.uniform() < 0.25 ? DecodeVariant::recalc : DecodeVariant::reuse;
    cfg.boundary_first = rng.uniform() < 0.85;
    cfg.corrupt_decode_normalization = o.corrupt_decode_normalization;
    const std::size_t Hg = 3 + rng.uniform_index(14);
    const std::size_t Wg = 3 + rng.uniform_index(kKernelOracleMaxPoints / Hg - 2);
    const std::size_t N = Hg * Wg, C = cfg.channels;

    auto params = init_params<double>(cfg, rng.next_u64(), InitOptions{true});
    const auto& layer = params.layers[0];
    const double rate = rng.uniform(0.0, 0.7);
    auto bits = rng.uniform() < 0.5 ? gen_pointwise_mask(Hg, Wg, rate, rng.next_u64()).bits
                                    : gen_patchwise_mask(Hg, Wg, rate, 2, rng.next_u64()).bits;
    if (std::count(bits.begin(), bits.end(), 1) == 0) bits[rng.uniform_index(N)] = 1;
    std::vector<double> mask(bits.begin(), bits.end());
    std::vector<double> y(N * C);
    for (auto& v : y) v = rng.normal();

    const auto oracle = kernel_oracle(layer, cfg, Hg, Wg, y, mask);
    LayerTrace<double> trace;
    const auto coords = grid_coords<double>(Hg, Wg);
    const D yt({N, C}, y);
    latent_operator_layer(yt, mask, coords, Hg, Wg, layer, cfg, &trace);
    for (std::size_t i = 0; i < N * C; ++i) worst = std::max(worst, std::abs(oracle.total[i] - trace.residual[i]));

    for (std::size_t h = 0; h < cfg.heads; ++h) {
      for (std::size_t x = 0; x < N; ++x) {
        for (std::size_t xi = 0; xi < N; ++xi) {
          if (mask[xi] == 0.0 && oracle.kernel_at(h, x, xi) != 0.0) ++column_violations;
        }
      }
    }
    // Zero branch: the layer's residual stage returns its input exactly.
    auto zeroed = params.layers[0];
    zeroed.merge_w = D::zeros(layer.merge_w.shape());
    zeroed.merge_b = D::zeros(layer.merge_b.shape());
    LayerTrace<double> ztrace;
    latent_operator_layer(yt, mask, coords, Hg, Wg, zeroed, cfg, &ztrace);
    for (std::size_t n = 0; n < N; ++n) {
      if (mask[n] == 0.0) continue;
      for (std::size_t ch = 0; ch < C; ++ch) {
        if (ztrace.residual[n * C + ch] != oracle.identity[n * C + ch]) ++identity_violations;
      }
    }
  }
  std::ostringstream os;
  os << count << " instances; kernel column violations " << column_violations << "; identity violations "
     << identity_violations;
  detail = os.str();
  if (column_violations || identity_violations) return std::numeric_limits<double>::infinity();
  return worst;
}

}  // namespace

VerifyCheck check_kernel_oracle(const VerifyOptions& o) {
  return timed("kernel_oracle", 1e-6, [&](VerifyCheck& c) {
    c.metric = kernel_instances(o, false, o.kernel_instances, c.detail);
  });
}

VerifyCheck check_kernel_oracle_attention(const VerifyOptions& o) {
  return timed("kernel_oracle_attention", 1e-6, [&](VerifyCheck& c) {
    c.metric = kernel_instances(o, true, std::max<std::size_t>(1, o.kernel_instances / 5), c.detail);
  });
}

VerifyCheck check_mask_coverage(const VerifyOptions& o) {
  return timed("mask_coverage", 0.0, [&](VerifyCheck& c) {
    const std::size_t Hg = 64, Wg = 64, N = Hg * Wg, D_layers = 8;
    ModelConfig cfg;
    cfg.heads = 1;
    cfg.channels = 1;
    cfg.latent_tokens = 1;
    cfg.pconv_kernel = 3;
    LayerParams<double> layer;
    layer.pconv_w = D({1, 1, 3, 3}, 1.0 / 9.0);
    layer.pconv_b = D::zeros({1});
    std::size_t not_full = 0, dilation_mismatch = 0, interior_uncovered = 0;
    for (std::size_t s = 0; s < o.coverage_seeds; ++s) {
      const auto m = gen_patchwise_mask(Hg, Wg, 0.5, 4, mix_seed(o.seed, 1000 + s));
      std::vector<double> cur(m.bits.begin(), m.bits.end());
      for (std::size_t l = 0; l < D_layers; ++l) {
        D slice({1, N, 1});
        for (std::size_t i = 0; i < N; ++i) slice[i] = cur[i];
        auto next = pconv_propagate(slice, cur, Hg, Wg, layer, cfg).mask;
        for (std::size_t i = 0; i < N; ++i) {
          if (cur[i] != 0.0 && next[i] == 0.0) ++dilation_mismatch;  // monotonicity
        }
        cur = std::move(next);
      }
      // Dilation oracle: Chebyshev distance <= D to an observed cell.
      bool full = true;
      for (std::size_t y = 0; y < Hg; ++y) {
        for (std::size_t x = 0; x < Wg; ++x) {
          bool reach = false;
          for (std::size_t yy = y >= D_layers ? y - D_layers : 0; yy <= std::min(Hg - 1, y + D_layers) && !reach; ++yy) {
            for (std::size_t xx = x >= D_layers ? x - D_layers : 0; xx <= std::min(Wg - 1, x + D_layers); ++xx) {
              if (m.at(yy, xx)) {
                reach = true;
                break;
              }
            }
          }
          if (reach != (cur[y * Wg + x] != 0.0)) ++dilation_mismatch;
          if (cur[y * Wg + x] == 0.0) {
            full = false;
            if (std::min({y, x, Hg - 1 - y, Wg - 1 - x}) >= D_layers) ++interior_uncovered;
          }
        }
      }
      if (!full) ++not_full;
    }
    // A mask is fully covered exactly when its largest hole has radius <= 8.
    // Zero padding counts as unobserved, so corner holes are the usual culprit.
    c.metric = static_cast<double>(dilation_mismatch);
    c.detail = std::to_string(o.coverage_seeds) + " masks; dilation mismatches " + std::to_string(dilation_mismatch) +
               "; all ones " + std::to_string(o.coverage_seeds - not_full) + "; hole radius > 8 in " +
               std::to_string(not_full) + "; uncovered cells away from the border " +
               std::to_string(interior_uncovered);
  });
}

VerifyCheck check_roundtrips(const VerifyOptions& o) {
  return timed("roundtrips", 0.0, [&](VerifyCheck& c) {
    const auto dir = scratch(o, "roundtrip");
    std::size_t failures = 0;
    std::vector<std::string> failed;
    auto same_file = [](const std::filesystem::path& a, const std::filesystem::path& b) {
      return detail::read_file_bytes(a.string()) == detail::read_file_bytes(b.string());
    };

    std::vector<Trajectory> trajs{solve_diffusion_reaction(GridGeometry::square(8), mix_seed(o.seed, 41), 3),
                                  solve_navier_stokes(GridGeometry::square(8), mix_seed(o.seed, 42), 2,
                                                      NavierStokesParams{.substeps = 2})};
    write_dataset(dir / "a.pobd", trajs);
    const auto back = read_dataset(dir / "a.pobd");
    bool ok = back.size() == trajs.size();
    for (std::size_t i = 0; ok && i < trajs.size(); ++i) {
      ok = back[i].frames == trajs[i].frames && back[i].seed == trajs[i].seed && back[i].kind == trajs[i].kind;
    }
    write_dataset(dir / "b.pobd", back);
    if (!ok || !same_file(dir / "a.pobd", dir / "b.pobd")) failed.push_back("dataset");

    const auto mask = gen_patchwise_mask(13, 11, 0.3, 3, mix_seed(o.seed, 43));
    write_mask(dir / "a.pobm", mask);
    const auto mback = read_mask(dir / "a.pobm");
    write_mask(dir / "b.pobm", mback);
    if (mback.bits != mask.bits || !same_file(dir / "a.pobm", dir / "b.pobm")) failed.push_back("mask");

    auto cfg = gradient_config();
    const auto params = init_params<float>(cfg, mix_seed(o.seed, 44), InitOptions{true});
    save_checkpoint(dir / "a.pobw", cfg, params, TrainConfig{}.to_keyvalue());
    const auto ck = load_checkpoint(dir / "a.pobw");
    save_checkpoint(dir / "b.pobw", ck.config, ck.params, ck.train_config);
    bool pok = true;
    const auto na = params.named();
    const auto nb = ck.params.named();
    pok = na.size() == nb.size();
    for (std::size_t i = 0; pok && i < na.size(); ++i) {
      pok = std::equal(na[i].second->values().begin(), na[i].second->values().end(), nb[i].second->values().begin());
    }
    if (!pok || !same_file(dir / "a.pobw", dir / "b.pobw")) failed.push_back("checkpoint");

    std::filesystem::remove_all(dir);
    failures = failed.size();
    c.metric = static_cast<double>(failures);
    c.detail = "dataset, mask, checkpoint";
    for (const auto& f : failed) c.detail += "; failed " + f;
  });
}

VerifyCheck check_training_determinism(const VerifyOptions& o) {
  return timed("training_determinism", 0.0, [&](VerifyCheck& c) {
    const auto dir = scratch(o, "determinism");
    TrainData data;
    for (std::size_t i = 0; i < 3; ++i) {
      data.train.push_back(solve_diffusion_reaction(GridGeometry::square(8), mix_seed(o.seed, 50 + i), 5));
    }
    data.val.push_back(solve_diffusion_reaction(GridGeometry::square(8), mix_seed(o.seed, 60), 5));
    ModelConfig mc;
    mc.layers = 1;
    mc.channels = 8;
    mc.heads = 2;
    mc.latent_tokens = 4;
    mc.history = 2;
    mc.physical_channels = 2;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = o.seed;
    tc.mask = MaskSpec{MaskPattern::patchwise, 0.25, 2};
    tc.record_wall_time = false;
    train(data, mc, tc, TrainOutputs{std::nullopt, dir / "a.csv"});
    train(data, mc, tc, TrainOutputs{std::nullopt, dir / "b.csv"});
    const bool same = detail::read_file_bytes((dir / "a.csv").string()) == detail::read_file_bytes((dir / "b.csv").string());
    std::filesystem::remove_all(dir);
    c.metric = same ? 0.0 : 1.0;
    c.detail = "two 2-epoch runs with the same seed";
  });
}

VerifyCheck check_ns_viscous_decay(const VerifyOptions& o) {
  (void)o;
  return timed("ns_viscous_decay", 1e-6, [&](VerifyCheck& c) {
    const std::size_t n = 32;
    NavierStokesParams p;
    p.forcing = false;
    p.nonlinear = false;
    NavierStokesSolver solver(n, p);
    const double kx = 1.0, ky = 2.0;
    std::vector<double> w(n * n);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        w[y * n + x] = std::cos(2.0 * std::numbers::pi *
                                (kx * static_cast<double>(x) + ky * static_cast<double>(y)) / static_cast<double>(n));
      }
    }
    solver.set_vorticity(w);
    const double k2 = 4.0 * std::numbers::pi * std::numbers::pi * (kx * kx + ky * ky);
    const double decay = std::exp(-p.viscosity * k2 * p.dt);
    double worst = 0.0;
    auto prev = solver.vorticity();
    for (int s = 0; s < 100; ++s) {
      solver.step();
      const auto cur = solver.vorticity();
      for (std::size_t i = 0; i < cur.size(); ++i) worst = std::max(worst, std::abs(cur[i] - prev[i] * decay));
      prev = cur;
    }
    c.metric = worst;
    c.detail = "mode (1,2) on 32x32, 100 steps, max per-step deviation";
  });
}

VerifyCheck check_ns_mean_conservation(const VerifyOptions& o) {
  return timed("ns_mean_conservation", 1e-10, [&](VerifyCheck& c) {
    const std::size_t n = 32;
    NavierStokesSolver solver(n, NavierStokesParams{});
    solver.set_vorticity(gaussian_random_vorticity(n, mix_seed(o.seed, 71)));
    double worst = 0.0, prev = solver.mean_vorticity();
    for (int s = 0; s < 100; ++s) {
      solver.step();
      worst = std::max(worst, std::abs(solver.mean_vorticity() - prev));
      prev = solver.mean_vorticity();
    }
    c.metric = worst;
    c.detail = "forced nonlinear run, 100 steps";
  });
}

VerifyCheck check_ns_energy(const VerifyOptions& o) {
  return timed("ns_energy_neutral", 1e-6, [&](VerifyCheck& c) {
    const std::size_t n = 64;
    NavierStokesParams p;
    p.viscosity = 0.0;
    p.forcing = false;
    NavierStokesSolver solver(n, p);
    solver.set_vorticity(gaussian_random_vorticity(n, mix_seed(o.seed, 72)));
    double worst = 0.0, prev = solver.kinetic_energy();
    for (int s = 0; s < 100; ++s) {
      solver.step();
      const double e = solver.kinetic_energy();
      worst = std::max(worst, std::abs(e - prev) / prev);
      prev = e;
    }
    c.metric = worst;
    c.detail = "inviscid unforced run on 64x64, 100 steps, relative drift per step";
  });
}

VerifyCheck check_dr_mean_conservation(const VerifyOptions& o) {
  return timed("dr_mean_conservation", 1e-10, [&](VerifyCheck& c) {
    const auto grid = GridGeometry::square(64);
    DiffusionReactionParams p;
    p.reaction = false;
    DiffusionReactionSolver solver(grid, p);
    solver.set_state(band_limited_noise(grid, 4, mix_seed(o.seed, 81)), band_limited_noise(grid, 4, mix_seed(o.seed, 82)));
    auto means = [&] {
      double su = 0.0, sv = 0.0;
      for (double v : solver.u()) su += v;
      for (double v : solver.v()) sv += v;
      return std::pair{su / static_cast<double>(grid.points()), sv / static_cast<double>(grid.points())};
    };
    auto prev = means();
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      solver.step();
      const auto cur = means();
      worst = std::max({worst, std::abs(cur.first - prev.first), std::abs(cur.second - prev.second)});
      prev = cur;
    }
    c.metric = worst;
    c.detail = "diffusion only on 64x64, 100 steps";
  });
}

VerifyCheck check_dr_reaction_ode(const VerifyOptions& o) {
  (void)o;
  return timed("dr_reaction_ode", 1e-12, [&](VerifyCheck& c) {
    const auto grid = GridGeometry::square(16);
    DiffusionReactionParams p;
    DiffusionReactionSolver solver(grid, p);
    double u = 0.4, v = -0.2;
    solver.set_state(std::vector<double>(grid.points(), u), std::vector<double>(grid.points(), v));
    double worst = 0.0;
    for (int s = 0; s < 200; ++s) {
      solver.step();
      const double du = u - u * u * u - p.k - v, dv = u - v;
      u += p.dt * du;
      v += p.dt * dv;
      for (std::size_t i = 0; i < grid.points(); ++i) {
        worst = std::max({worst, std::abs(solver.u()[i] - u), std::abs(solver.v()[i] - v)});
      }
    }
    c.metric = worst;
    c.detail = "constant field vs scalar explicit-Euler ODE, 200 steps";
  });
}

std::vector<std::string> verify_check_names() {
  return {"primitive_gradients", "matmul_oracle",        "model_gradients",      "kernel_oracle",
          "kernel_oracle_attention", "mask_coverage",    "roundtrips",           "training_determinism",
          "ns_viscous_decay",    "ns_mean_conservation", "ns_energy_neutral",    "dr_mean_conservation",
          "dr_reaction_ode"};
}

std::vector<VerifyCheck> run_verify(const VerifyOptions& o, const std::vector<std::string>& names) {
  using Fn = VerifyCheck (*)(const VerifyOptions&);
  const std::vector<std::pair<std::string, Fn>> table{
      {"primitive_gradients", check_primitive_gradients},
      {"matmul_oracle", check_matmul_oracle},
      {"model_gradients", check_model_gradients},
      {"kernel_oracle", check_kernel_oracle},
      {"kernel_oracle_attention", check_kernel_oracle_attention},
      {"mask_coverage", check_mask_coverage},
      {"roundtrips", check_roundtrips},
      {"training_determinism", check_training_determinism},
      {"ns_viscous_decay", check_ns_viscous_decay},
      {"ns_mean_conservation", check_ns_mean_conservation},
      {"ns_energy_neutral", check_ns_energy},
      {"dr_mean_conservation", check_dr_mean_conservation},
      {"dr_reaction_ode", check_dr_reaction_ode},
  };
  const bool all = std::find(names.begin(), names.end(), "all") != names.end();
  for (const auto& n : names) {
    if (n == "all") continue;
    if (std::none_of(table.begin(), table.end(), [&](const auto& e) { return e.first == n; })) {
      throw ValueError("verify: unknown check '" + n + "'");
    }
  }
  std::vector<VerifyCheck> out;
  for (const auto& [name, fn] : table) {
    if (all || std::find(names.begin(), names.end(), name) != names.end()) out.push_back(fn(o));
  }
  return out;
}

void write_verify_csv(const std::filesystem::path& path, const std::vector<VerifyCheck>& checks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "check,passed,metric,threshold,seconds,detail\n";
  for (const auto& c : checks) {
    std::string d = c.detail;
    std::replace(d.begin(), d.end(), ',', ';');
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", c.seconds);
    out << c.name << ',' << (c.passed ? 1 : 0) << ',' << format_double(c.metric) << ','
        << format_double(c.threshold) << ',' << secs << ',' << d << '\n';
  }
}

}  // namespace lano
