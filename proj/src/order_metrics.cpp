#include "diffsae/order_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "diffsae/io.hpp"

namespace diffsae {

double jaccard(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::unordered_set<uint32_t> sa(a.begin(), a.end());
  std::size_t inter = 0;
  std::unordered_set<uint32_t> uni(sa);
  for (uint32_t x : b) {
    if (sa.count(x)) ++inter;
    uni.insert(x);
  }
  return static_cast<double>(inter) / static_cast<double>(uni.size());
}

namespace {

std::vector<uint32_t> truncated(const std::vector<uint32_t>& ranked_set, uint32_t k_feat) {
  if (ranked_set.size() <= k_feat) return ranked_set;
  return std::vector<uint32_t>(ranked_set.begin(), ranked_set.begin() + k_feat);
}

void require_steps(const DecodingTrace& trace) {
  trace.validate();
  if (trace.steps < 2)
    throw std::invalid_argument("order metrics need a trace with at least 2 steps");
}

// First step at which the position is not masked; nullopt if always masked.
std::vector<std::optional<uint32_t>> decode_steps(const DecodingTrace& trace) {
  std::vector<std::optional<uint32_t>> k_i(trace.positions);
  for (uint32_t k = 0; k < trace.steps; ++k) {
    std::unordered_set<uint32_t> masked(trace.step_records[k].masked.begin(),
                                        trace.step_records[k].masked.end());
    for (uint32_t i = 0; i < trace.positions; ++i)
      if (!masked.count(i) && !k_i[i]) k_i[i] = k;
  }
  return k_i;
}

}  // namespace

std::vector<PremaskValue> premask_stability(const DecodingTrace& trace, uint32_t k_feat) {
  require_steps(trace);
  std::vector<PremaskValue> out;
  for (uint32_t k = 1; k < trace.steps; ++k) {
    const auto& cur = trace.step_records[k];
    const auto& prev = trace.step_records[k - 1];
    std::unordered_set<uint32_t> prev_masked(prev.masked.begin(), prev.masked.end());
    for (uint32_t pos : cur.masked) {
      if (!prev_masked.count(pos))
        throw std::invalid_argument("trace violates monotone commitment: position " +
                                    std::to_string(pos) + " masked at step " + std::to_string(k) +
                                    " but not at " + std::to_string(k - 1));
      for (std::size_t li = 0; li < trace.layers.size(); ++li) {
        const double v =
            jaccard(truncated(cur.sets[li][pos], k_feat), truncated(prev.sets[li][pos], k_feat));
        out.push_back({li, k, pos, v});
      }
    }
  }
  return out;
}

std::vector<DriftValue> postdecode_drift(const DecodingTrace& trace, uint32_t k_feat) {
  require_steps(trace);
  const auto k_i = decode_steps(trace);
  bool any_decoded = false;
  for (const auto& k : k_i) any_decoded = any_decoded || k.has_value();
  if (!any_decoded) throw std::invalid_argument("postdecode_drift: trace has no decoded positions");

  std::vector<DriftValue> out;
  for (uint32_t pos = 0; pos < trace.positions; ++pos) {
    if (!k_i[pos]) continue;
    const uint32_t dk = *k_i[pos];
    if (dk + 1 >= trace.steps) continue;  // empty averaging window
    for (std::size_t li = 0; li < trace.layers.size(); ++li) {
      DriftValue dv;
      dv.layer_index = li;
      dv.position = pos;
      dv.decode_step = dk;
      double acc = 0.0;
      for (uint32_t k = dk + 1; k < trace.steps; ++k) {
        const double sim = jaccard(truncated(trace.step_records[k].sets[li][pos], k_feat),
                                   truncated(trace.step_records[k - 1].sets[li][pos], k_feat));
        dv.similarity_series.push_back(sim);
        acc += 1.0 - sim;
      }
      dv.drift = acc / static_cast<double>(dv.similarity_series.size());
      out.push_back(std::move(dv));
    }
  }
  return out;
}

std::vector<LockRateValue> top1_lock_rate(const DecodingTrace& trace) {
  require_steps(trace);
  std::vector<LockRateValue> out;
  for (uint32_t k = 1; k < trace.steps; ++k) {
    const auto& cur = trace.step_records[k];
    const auto& prev = trace.step_records[k - 1];
    if (cur.masked.empty()) continue;  // undefined, emitted as absent
    for (std::size_t li = 0; li < trace.layers.size(); ++li) {
      std::size_t locked = 0;
      for (uint32_t pos : cur.masked)
        if (cur.top1[li][pos] == prev.top1[li][pos]) ++locked;
      out.push_back({li, k, static_cast<double>(locked) / static_cast<double>(cur.masked.size())});
    }
  }
  return out;
}

std::vector<FlipCountValue> top1_flip_count(const DecodingTrace& trace) {
  require_steps(trace);
  std::vector<FlipCountValue> out;
  for (uint32_t k = 1; k < trace.steps; ++k) {
    const auto& cur = trace.step_records[k];
    const auto& prev = trace.step_records[k - 1];
    std::unordered_set<uint32_t> masked(cur.masked.begin(), cur.masked.end());
    for (std::size_t li = 0; li < trace.layers.size(); ++li) {
      FlipCountValue fc{li, k, 0, 0};
      for (uint32_t pos = 0; pos < trace.positions; ++pos) {
        if (masked.count(pos)) continue;
        ++fc.decoded;
        if (cur.top1[li][pos] != prev.top1[li][pos]) ++fc.flips;
      }
      out.push_back(fc);
    }
  }
  return out;
}

namespace {

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

}  // namespace

OrderMetricsSummary summarize(const std::vector<DecodingTrace>& traces, uint32_t k_feat,
                              uint32_t tau_bins) {
  if (traces.empty()) throw std::invalid_argument("summarize: no traces");
  OrderMetricsSummary s;
  s.strategy = traces.front().strategy;
  s.layers = traces.front().layers;
  s.tau_bins = tau_bins;
  for (const auto& t : traces) {
    if (t.layers != s.layers)
      throw std::invalid_argument("summarize: traces do not share tracked layers");
    s.steps = std::max(s.steps, t.steps);
  }

  const std::size_t n_layers = s.layers.size();
  std::vector<std::vector<MeanAcc>> pre(n_layers, std::vector<MeanAcc>(s.steps));
  std::vector<std::vector<MeanAcc>> post(n_layers, std::vector<MeanAcc>(s.steps));
  std::vector<std::vector<MeanAcc>> lock(n_layers, std::vector<MeanAcc>(s.steps));
  std::vector<std::vector<MeanAcc>> flip(n_layers, std::vector<MeanAcc>(s.steps));
  std::vector<MeanAcc> pre_tau(tau_bins), post_tau(tau_bins);
  std::vector<MeanAcc> drift_layer(n_layers);

  // Mixed-K trace sets normalize per trace onto tau = k/K.
  auto tau_bin = [tau_bins](uint32_t k, uint32_t steps) {
    const double tau = static_cast<double>(k) / static_cast<double>(steps);
    auto bin = static_cast<std::size_t>(tau * tau_bins);
    return std::min<std::size_t>(bin, tau_bins - 1);
  };

  for (const auto& t : traces) {
    for (const auto& v : premask_stability(t, k_feat)) {
      pre[v.layer_index][v.step].add(v.value);
      pre_tau[tau_bin(v.step, t.steps)].add(v.value);
    }
    const auto drifts = postdecode_drift(t, k_feat);
    for (const auto& dv : drifts) {
      drift_layer[dv.layer_index].add(dv.drift);
      for (std::size_t j = 0; j < dv.similarity_series.size(); ++j) {
        const uint32_t k = dv.decode_step + 1 + static_cast<uint32_t>(j);
        post[dv.layer_index][k].add(dv.similarity_series[j]);
        post_tau[tau_bin(k, t.steps)].add(1.0 - dv.similarity_series[j]);
      }
    }
    for (const auto& v : top1_lock_rate(t)) lock[v.layer_index][v.step].add(v.rate);
    for (const auto& v : top1_flip_count(t))
      flip[v.layer_index][v.step].add(static_cast<double>(v.flips));
  }

  auto to_grid = [&](const std::vector<std::vector<MeanAcc>>& acc) {
    OrderMetricsSummary::Grid g;
    g.cells.resize(n_layers);
    for (std::size_t li = 0; li < n_layers; ++li) {
      g.cells[li].resize(s.steps);
      for (uint32_t k = 0; k < s.steps; ++k) g.cells[li][k] = acc[li][k].mean();
    }
    return g;
  };
  s.premask_mean = to_grid(pre);
  s.postdecode_mean = to_grid(post);
  s.lock_rate = to_grid(lock);
  s.flip_count = to_grid(flip);
  s.premask_tau.resize(tau_bins);
  s.postdecode_tau.resize(tau_bins);
  for (uint32_t b = 0; b < tau_bins; ++b) {
    s.premask_tau[b] = pre_tau[b].mean();
    s.postdecode_tau[b] = post_tau[b].mean();
  }
  s.drift_by_layer.resize(n_layers, 0.0);
  for (std::size_t li = 0; li < n_layers; ++li)
    s.drift_by_layer[li] = drift_layer[li].mean().value_or(0.0);
  return s;
}

void write_summary_csvs(const OrderMetricsSummary& s, const std::string& out_dir) {
  auto write_grid = [&](const OrderMetricsSummary::Grid& g, const std::string& name) {
    io::CsvWriter csv(out_dir + "/" + name + ".csv");
    csv.row({"layer", "step", "tau", "value", "strategy"});
    for (std::size_t li = 0; li < s.layers.size(); ++li)
      for (uint32_t k = 0; k < s.steps; ++k) {
        if (!g.cells[li][k]) continue;
        const double tau = static_cast<double>(k) / static_cast<double>(s.steps);
        csv.row({std::to_string(s.layers[li]), std::to_string(k), io::fmt_double(tau),
                 io::fmt_double(*g.cells[li][k]), s.strategy});
      }
    csv.close();
  };
  write_grid(s.premask_mean, "premask_stability");
  write_grid(s.postdecode_mean, "postdecode_similarity");
  write_grid(s.lock_rate, "top1_lock_rate");
  write_grid(s.flip_count, "top1_flip_count");

  io::CsvWriter tau_csv(out_dir + "/tau_curves.csv");
  tau_csv.row({"metric", "tau_bin", "tau", "value", "strategy"});
  for (uint32_t b = 0; b < s.tau_bins; ++b) {
    const double tau = (static_cast<double>(b) + 0.5) / static_cast<double>(s.tau_bins);
    if (s.premask_tau[b])
      tau_csv.row({"premask_stability", std::to_string(b), io::fmt_double(tau),
                   io::fmt_double(*s.premask_tau[b]), s.strategy});
    if (s.postdecode_tau[b])
      tau_csv.row({"postdecode_drift", std::to_string(b), io::fmt_double(tau),
                   io::fmt_double(*s.postdecode_tau[b]), s.strategy});
  }
  tau_csv.close();

  io::CsvWriter drift_csv(out_dir + "/drift_by_layer.csv");
  drift_csv.row({"layer", "d_post", "strategy"});
  for (std::size_t li = 0; li < s.layers.size(); ++li)
    drift_csv.row({std::to_string(s.layers[li]), io::fmt_double(s.drift_by_layer[li]), s.strategy});
  drift_csv.close();
}

}  // namespace diffsae
