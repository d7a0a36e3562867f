#include "lano/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lano/error.hpp"
#include "lano/interp.hpp"
#include "lano/metrics.hpp"
#include "lano/rng.hpp"

namespace lano {

namespace {

constexpr std::uint64_t kEvalStream = 0x65766c;

std::string params_digest(const ModelParams<float>& params) {
  std::string bytes;
  for (const auto& [name, t] : params.named()) {
    bytes += name;
    const auto v = t->values();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return fingerprint(bytes);
}

void summarize(EvalRow& row, std::vector<double> errs) {
  row.samples = errs.size();
  if (errs.empty()) return;
  row.mean_rel_l2 = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
  double var = 0.0;
  for (double e : errs) var += (e - row.mean_rel_l2) * (e - row.mean_rel_l2);
  row.std_rel_l2 = std::sqrt(var / static_cast<double>(errs.size()));
  std::sort(errs.begin(), errs.end());
  const std::size_t n = errs.size();
  row.median_rel_l2 = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
}

}  // namespace

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "label,pattern,patch_size,train_rate,test_rate,mean_rel_l2,median_rel_l2,std_rel_l2,samples,fingerprint\n";
  for (const auto& r : rows) {
    out << r.label << ',' << to_string(r.pattern) << ',' << r.patch_size << ',' << format_double(r.train_rate) << ','
        << format_double(r.test_rate) << ',' << format_double(r.mean_rel_l2) << ','
        << format_double(r.median_rel_l2) << ',' << format_double(r.std_rel_l2) << ',' << r.samples << ','
        << fingerprint << '\n';
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

EvalReport evaluate(const ModelParams<float>& params, const ModelConfig& config, const std::vector<Trajectory>& test,
                    const EvalOptions& o) {
  if (test.empty()) throw ValueError("evaluate: empty test split");
  if (o.patterns.empty() || o.test_rates.empty()) throw ValueError("evaluate: no patterns or rates requested");
  EvalReport report;
  std::string settings = config.to_keyvalue().to_text() + params_digest(params) + std::to_string(o.seed) + "|" +
                         std::to_string(o.patch_size) + "|" + std::to_string(o.windows);
  for (double r : o.test_rates) settings += "|" + format_double(r);
  report.fingerprint = fingerprint(settings);

  for (std::size_t p = 0; p < o.patterns.size(); ++p) {
    for (std::size_t r = 0; r < o.test_rates.size(); ++r) {
      EvalRow row;
      row.label = o.label;
      row.pattern = o.patterns[p];
      row.patch_size = o.patterns[p] == MaskPattern::patchwise ? o.patch_size : 1;
      row.train_rate = o.train_rate;
      row.test_rate = o.test_rates[r];
      const MaskSpec spec{row.pattern, row.test_rate, std::max<std::size_t>(1, o.patch_size)};
      const std::uint64_t stream = mix_seed(mix_seed(o.seed, kEvalStream + p), r);
      std::vector<double> errs;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto mask = generate_mask(spec, test[i].height, test[i].width, mix_seed(stream, i));
        errs.push_back(one_step_error(params, config, {test[i]}, {mask}, o.windows, o.interp_fill));
      }
      summarize(row, std::move(errs));
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace {

std::vector<std::string> default_values(const std::string& axis) {
  if (axis == "tokens") return {"1", "8", "16", "32", "64"};
  if (axis == "wo") return {"full", "BF", "TM", "MPT"};
  if (axis == "mixer") return {"attention", "mlp"};
  if (axis == "patch") return {"2", "4", "8"};
  if (axis == "mpt") return {"off", "on"};
  throw ValueError("ablate: unknown axis '" + axis + "' (expected tokens, wo, mixer, patch or mpt)");
}

std::size_t parse_size(const std::string& s, const std::string& axis) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ValueError("ablate: bad value '" + s + "' for axis " + axis);
}

}  // namespace

EvalReport ablate(const ExperimentData& data, const AblationOptions& o) {
  auto values = default_values(o.axis);
  if (!o.values.empty()) values = o.values;
  EvalReport report;
  std::string fps;
  for (const auto& v : values) {
    ModelConfig mc = o.model;
    TrainConfig tc = o.train;
    EvalOptions eo = o.eval;
    if (o.axis == "tokens") {
      mc.latent_tokens = parse_size(v, o.axis);
    } else if (o.axis == "wo") {
      if (v == "BF") {
        mc.boundary_first = false;
      } else if (v == "TM") {
        mc.token_mixer = TokenMixer::none;
      } else if (v == "MPT") {
        tc.mpt = false;
        tc.consistency_weight = 0.0;
      } else if (v != "full") {
        throw ValueError("ablate: bad value '" + v + "' for axis wo (expected full, BF, TM or MPT)");
      }
    } else if (o.axis == "mixer") {
      mc.token_mixer = parse_token_mixer(v);
    } else if (o.axis == "patch") {
      const auto p = parse_size(v, o.axis);
      tc.mask.pattern = MaskPattern::patchwise;
      tc.mask.patch_size = p;
      eo.patterns = {MaskPattern::patchwise};
      eo.patch_size = p;
    } else if (o.axis == "mpt") {
      if (v == "off") {
        tc.mpt = false;
        tc.consistency_weight = 0.0;
      } else if (v != "on") {
        throw ValueError("ablate: bad value '" + v + "' for axis mpt (expected on or off)");
      }
    }
    auto result = train(TrainData{data.train, data.val}, mc, tc);
    eo.label = o.axis + "=" + v;
    eo.train_rate = tc.mask.missing_rate;
    auto r = evaluate(result.best_params, mc, data.test, eo);
    fps += r.fingerprint;
    for (auto& row : r.rows) report.rows.push_back(std::move(row));
  }
  report.fingerprint = fingerprint(fps);
  return report;
}

EvalReport bench_matrix(const ExperimentData& data, const BenchMatrixOptions& o) {
  static const double kTrain[3] = {0.05, 0.25, 0.50};
  static const double kTest[3][2] = {{0.05, 0.25}, {0.25, 0.50}, {0.50, 0.75}};
  EvalReport report;
  std::string fps;
  for (auto pattern : o.patterns) {
    for (std::size_t i = 0; i < 3; ++i) {
      TrainConfig tc = o.train;
      tc.mask = MaskSpec{pattern, kTrain[i], o.patch_size};
      auto result = train(TrainData{data.train, data.val}, o.model, tc);
      EvalOptions eo;
      eo.patterns = {pattern};
      eo.test_rates = {kTest[i][0], kTest[i][1]};
      eo.patch_size = o.patch_size;
      eo.seed = o.eval_seed;
      eo.windows = o.windows;
      eo.train_rate = kTrain[i];
      eo.label = std::string(to_string(pattern)) + "@" + format_double(kTrain[i]);
      auto r = evaluate(result.best_params, o.model, data.test, eo);
      fps += r.fingerprint;
      for (auto& row : r.rows) report.rows.push_back(std::move(row));
    }
  }
  report.fingerprint = fingerprint(fps);
  return report;
}

}  // namespace lano
