// Copyright 2026 The GPViT-cpp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gpvit/harness/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "gpvit/cost.hpp"
#include "gpvit/error.hpp"
#include "gpvit/harness/dataset.hpp"
#include "gpvit/model.hpp"

namespace gpvit {

bool InvariantReport::passed() const { return failures() == 0; }

std::size_t InvariantReport::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; }));
}

std::vector<std::string> invariant_suite_names() {
  return {"softmax", "grouping", "permutation", "support", "full-window", "scaling", "cost"};
}

namespace {

using D = double;

struct Suite {
  const ModelConfig& cfg;
  const InvariantOptions& opts;
  InvariantReport& report;
  std::string name;

  void below(const std::string& check, double value, double bound, const std::string& detail = "") {
    report.checks.push_back({name, check, value <= bound, value, bound, detail});
  }
  void above(const std::string& check, double value, double bound, const std::string& detail = "") {
    report.checks.push_back({name, check, value >= bound, value, bound, detail});
  }
};

TokenMap<D> random_map(GridShape grid, std::size_t channels, Rng& rng) {
  std::vector<D> v(grid.tokens() * channels);
  for (auto& x : v) x = rng.normal();
  return {Tensor<D>::from_data({grid.tokens(), channels}, std::move(v)), grid};
}

double max_abs_diff(const Tensor<D>& a, const Tensor<D>& b) {
  const auto x = a.data(), y = b.data();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
  return m;
}

// A grid that forces padding for the configured window.
GridShape awkward_grid(const ModelConfig& cfg) { return {cfg.window_size + 2, cfg.window_size + 3}; }

struct LocalKernel {
  std::string label;
  WindowSpec spec;
};

std::vector<LocalKernel> local_kernels(const ModelConfig& cfg) {
  std::vector<LocalKernel> k = {{"window", WindowSpec::window(cfg.window_size)},
                                {"shifted-window", WindowSpec::shifted(cfg.window_size)}};
  if (cfg.heads % 2 == 0) k.push_back({"lepe", WindowSpec::strip_pair(cfg.strip_size)});
  return k;
}

// Support of each head as token-pair masks; LePE halves differ.
std::vector<SupportMask> head_supports(const WindowSpec& spec, GridShape grid, std::size_t heads) {
  const std::size_t n = grid.tokens();
  switch (spec.kind) {
    case WindowKind::full: return std::vector<SupportMask>(heads, SupportMask(n, n, true));
    case WindowKind::window: return std::vector<SupportMask>(heads, window_partition(grid, spec.size).support(n));
    case WindowKind::shifted_window:
      return std::vector<SupportMask>(heads, shifted_window_partition(grid, spec.size, spec.shift).support(n));
    case WindowKind::strip_pair: {
      std::vector<SupportMask> s(heads / 2, strip_partition(grid, spec.size, StripAxis::horizontal).support(n));
      s.resize(heads, strip_partition(grid, spec.size, StripAxis::vertical).support(n));
      return s;
    }
  }
  return {};
}

TokenMap<D> run_kernel(const TokenMap<D>& x, const EncoderLayer<D>& layer, Tensor<D>* weights) {
  return layer.attend(x, weights);
}

void softmax_suite(Suite& s) {
  Rng rng(s.opts.seed);
  for (GridShape grid : {s.cfg.native_grid(), awkward_grid(s.cfg)}) {
    const TokenMap<D> x = random_map(grid, s.cfg.channels, rng);
    std::vector<LocalKernel> kernels = local_kernels(s.cfg);
    kernels.push_back({"global", WindowSpec::full()});
    for (const auto& k : kernels) {
      EncoderLayer<D> layer(s.cfg.channels, s.cfg.heads, s.cfg.ffn_expansion, k.spec, 0.0, rng);
      Tensor<D> w;
      run_kernel(x, layer, &w);
      const std::size_t n = grid.tokens(), h = s.cfg.heads;
      double dev = 0.0;
      const auto wd = w.data();
      for (std::size_t r = 0; r < h * n; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += wd[r * n + j];
        dev = std::max(dev, std::fabs(sum - 1.0));
      }
      s.below(k.label + " rows sum to one", dev, 1e-6,
              "grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width));
    }
  }
}

std::vector<const GPBlock<D>*> gp_blocks(const Model<D>& model) {
  std::vector<const GPBlock<D>*> out;
  for (const auto& l : model.layers) {
    if (const auto* gp = std::get_if<GPBlock<D>>(&l)) out.push_back(gp);
  }
  return out;
}

void apply_fault(Model<D>& model, bool flip) {
  for (auto& l : model.layers) {
    if (auto* gp = std::get_if<GPBlock<D>>(&l)) {
      gp->opts.transpose_grouping_softmax = flip;
      gp->grouping.transpose_softmax = flip;
    }
  }
}

void grouping_suite(Suite& s) {
  Model<D> model(s.cfg, s.opts.seed);
  apply_fault(model, s.opts.flip_grouping_softmax);
  const auto blocks = gp_blocks(model);
  if (blocks.empty()) {
    s.report.checks.push_back({s.name, "configuration has gp blocks", true, 0, 0, "skipped: no gp blocks"});
    return;
  }
  Rng rng(s.opts.seed + 7);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const GPBlock<D>& block = *blocks[b];
    const TokenMap<D> x = random_map(s.cfg.native_grid(), s.cfg.channels, rng);
    const GroupingResult<D> g = block.grouping.forward(x, block.group_tokens);
    const std::size_t n = x.tokens(), m = block.opts.groups, h = block.grouping.heads, c = s.cfg.channels, d = c / h;
    const auto w = g.assignment.weights.data();
    double dev = 0.0, neg = 0.0;
    for (std::size_t r = 0; r < h * m; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sum += w[r * n + j];
        neg = std::max(neg, -w[r * n + j]);
      }
      dev = std::max(dev, std::fabs(sum - 1.0));
    }
    const std::string tag = "block " + std::to_string(b);
    s.below("assignment rows sum to one", dev, 1e-6, tag);
    s.below("assignment weights are nonnegative", neg, 0.0, tag);

    // Each head slice of every grouped feature within the per-coordinate
    // range of the input head slices (values are LN(X)).
    const Tensor<D> values = block.grouping.norm.forward(x.features);
    const auto v = values.data();
    const auto y = g.grouped.data();
    double excess = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double lo = v[ch], hi = v[ch];
      for (std::size_t t = 1; t < n; ++t) {
        lo = std::min(lo, v[t * c + ch]);
        hi = std::max(hi, v[t * c + ch]);
      }
      for (std::size_t gi = 0; gi < m; ++gi) {
        const double val = y[gi * c + ch];
        excess = std::max({excess, lo - val, val - hi});
      }
    }
    s.below("grouped features in convex hull", std::max(excess, 0.0), 1e-9, tag + ", head width " + std::to_string(d));
    bool argmax_ok = g.assignment.argmax.size() == n;
    for (std::size_t a : g.assignment.argmax) argmax_ok = argmax_ok && a < m;
    s.report.checks.push_back({s.name, "argmax indices in range", argmax_ok, 0, 0, tag});
  }
}

void permutation_suite(Suite& s) {
  Model<D> model(s.cfg, s.opts.seed);
  apply_fault(model, s.opts.flip_grouping_softmax);
  const auto blocks = gp_blocks(model);
  if (blocks.empty()) {
    s.report.checks.push_back({s.name, "configuration has gp blocks", true, 0, 0, "skipped: no gp blocks"});
    return;
  }
  Rng rng(s.opts.seed + 11);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    GPBlock<D> block = *blocks[b];  // shares parameters with the local model
    auto k = block.ungrouping.dwconv.kernel.mutable_data();
    std::fill(k.begin(), k.end(), 0.0);
    const std::size_t c = s.cfg.channels;
    for (std::size_t ch = 0; ch < c; ++ch) k[4 * c + ch] = 1.0;
    auto bias = block.ungrouping.dwconv.bias.mutable_data();
    std::fill(bias.begin(), bias.end(), 0.0);

    const TokenMap<D> x = random_map(s.cfg.native_grid(), c, rng);
    std::vector<std::int64_t> perm(x.tokens());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    const std::span<const std::int64_t> ps(perm);
    ForwardContext ctx;
    const Tensor<D> y = block.forward(x, ctx).features;
    const Tensor<D> y_perm = block.forward({ops::gather_rows(x.features, ps), x.grid}, ctx).features;
    s.below("gp block equivariant to token permutation", max_abs_diff(ops::gather_rows(y, ps), y_perm), 1e-5,
            "block " + std::to_string(b));
  }
}

void support_suite(Suite& s) {
  Rng rng(s.opts.seed + 13);
  for (GridShape grid : {s.cfg.native_grid(), awkward_grid(s.cfg)}) {
    const std::string tag = "grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width);
    const std::size_t n = grid.tokens(), h = s.cfg.heads;
    for (const auto& k : local_kernels(s.cfg)) {
      EncoderLayer<D> layer(s.cfg.channels, h, s.cfg.ffn_expansion, k.spec, 0.0, rng);
      const TokenMap<D> x = random_map(grid, s.cfg.channels, rng);
      Tensor<D> w;
      const Tensor<D> y = run_kernel(x, layer, &w).features;
      const std::vector<SupportMask> sup = head_supports(k.spec, grid, h);
      const auto wd = w.data();
      double outside = 0.0;
      for (std::size_t hh = 0; hh < h; ++hh)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (!sup[hh].at(i, j)) outside = std::max(outside, std::fabs(wd[(hh * n + i) * n + j]));
      s.below(k.label + " weights zero outside support", outside, 0.0, tag);

      // Perturbing a token must leave every query outside its support untouched.
      double leak = 0.0;
      for (std::size_t j : {std::size_t{0}, n / 2, n - 1}) {
        std::vector<D> xv = x.features.to_vector();
        for (std::size_t ch = 0; ch < s.cfg.channels; ++ch) xv[j * s.cfg.channels + ch] += 3.0;
        const TokenMap<D> xp{Tensor<D>::from_data({n, s.cfg.channels}, std::move(xv)), grid};
        const Tensor<D> yp = run_kernel(xp, layer, nullptr).features;
        const auto a = y.data(), b = yp.data();
        for (std::size_t i = 0; i < n; ++i) {
          bool reach = false;
          for (const auto& m : sup) reach = reach || m.at(i, j);
          if (reach) continue;
          for (std::size_t ch = 0; ch < s.cfg.channels; ++ch) {
            leak = std::max(leak, std::fabs(a[i * s.cfg.channels + ch] - b[i * s.cfg.channels + ch]));
          }
        }
      }
      s.below(k.label + " outputs independent of tokens outside support", leak, 0.0, tag);
    }
  }
}

void full_window_suite(Suite& s) {
  Rng rng(s.opts.seed + 17);
  for (GridShape grid : {s.cfg.native_grid(), awkward_grid(s.cfg)}) {
    const std::string tag = "grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width);
    EncoderLayer<D> global(s.cfg.channels, s.cfg.heads, s.cfg.ffn_expansion, WindowSpec::full(), 0.0, rng);
    EncoderLayer<D> windowed = global;
    windowed.spec = WindowSpec::window(std::max(grid.height, grid.width));
    const TokenMap<D> x = random_map(grid, s.cfg.channels, rng);
    Tensor<D> wg, ww;
    const Tensor<D> yg = run_kernel(x, global, &wg).features;
    const Tensor<D> yw = run_kernel(x, windowed, &ww).features;
    s.below("full window output equals global attention", max_abs_diff(yg, yw), 1e-6, tag);
    s.below("full window weights equal global attention", max_abs_diff(wg, ww), 1e-6, tag);
  }
}

void scaling_suite(Suite& s) {
  const std::vector<std::size_t> doubling = {784, 1568, 3136, 6272, 12544, 25088};
  for (std::size_t c : {std::size_t{216}, std::size_t{348}, s.cfg.channels}) {
    for (std::size_t m : {16, 32, 64}) {
      const auto f = scaling_series({ScalingKind::gp, m}, c, doubling);
      double worst = 0.0;
      for (std::size_t i = 0; i + 1 < f.size(); ++i) worst = std::max(worst, static_cast<double>(f[i + 1]) / f[i]);
      s.below("gp block doubling ratio", worst, 2.2, "C=" + std::to_string(c) + " M=" + std::to_string(m));
    }
    const auto sa = scaling_series({ScalingKind::self_attn, 0}, c, {4096, 8192});
    s.above("self-attention doubling ratio", static_cast<double>(sa[1]) / sa[0], 3.5,
            "C=" + std::to_string(c) + " N=4096->8192");
  }
  // Affine gp(N) and quadratic self-attention(N).
  const std::vector<std::size_t> ns = {196, 784, 3136, 12544};
  const auto g = scaling_series({ScalingKind::gp, 64}, s.cfg.channels, ns);
  const double x0 = ns[0], x3 = ns[3];
  const double slope = (static_cast<double>(g[3]) - g[0]) / (x3 - x0);
  double resid = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    resid = std::max(resid, std::fabs(g[0] + slope * (ns[i] - x0) - static_cast<double>(g[i])));
    mean += static_cast<double>(g[i]) / ns.size();
  }
  s.below("gp block flops affine in tokens", resid / mean, 1e-3, "max residual relative to mean");
  const auto q = scaling_series({ScalingKind::self_attn, 0}, s.cfg.channels, ns);
  // Second divided difference over the first three points.
  const double d1 = (static_cast<double>(q[1]) - q[0]) / (ns[1] - x0);
  const double d2 = (static_cast<double>(q[2]) - q[1]) / (static_cast<double>(ns[2]) - ns[1]);
  s.above("self-attention quadratic coefficient positive", (d2 - d1) / (static_cast<double>(ns[2]) - x0), 1e-12);
}

void cost_suite(Suite& s) {
  Model<D> model(s.cfg, s.opts.seed);
  const auto analytic = static_cast<double>(count_params(s.cfg));
  const auto built = static_cast<double>(model.parameter_count());
  s.below("analytic parameters equal built model", std::fabs(analytic - built), 0.0,
          std::to_string(model.parameter_count()) + " built");
  DatasetSpec spec;
  spec.classes = 1;
  spec.samples_per_class = 1;
  spec.image_size = s.cfg.input_size;
  spec.seed = s.opts.seed;
  const Tensor<D> image = make_synthetic_dataset<D>(spec).images[0];
  NoGradGuard no_grad;
  MacCountScope scope;
  model.forward_classify(image);
  const auto executed = static_cast<double>(scope.count());
  const auto predicted = static_cast<double>(count_flops(s.cfg, s.cfg.input_size, s.cfg.input_size));
  s.below("analytic flops equal executed MACs", std::fabs(executed - predicted), 0.0,
          std::to_string(scope.count()) + " executed");
}

}  // namespace

InvariantReport run_invariants(const ModelConfig& cfg, const InvariantOptions& opts) {
  if (opts.suites.empty()) throw UsageError("invariants: no suites selected");
  const std::vector<std::string> known = invariant_suite_names();
  for (const auto& name : opts.suites) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw UsageError("invariants: unknown suite '" + name + "'");
    }
  }
  cfg.validate();
  InvariantReport report;
  report.model = cfg.name;
  for (const auto& name : opts.suites) {
    Suite s{cfg, opts, report, name};
    if (name == "softmax") softmax_suite(s);
    if (name == "grouping") grouping_suite(s);
    if (name == "permutation") permutation_suite(s);
    if (name == "support") support_suite(s);
    if (name == "full-window") full_window_suite(s);
    if (name == "scaling") scaling_suite(s);
    if (name == "cost") cost_suite(s);
  }
  return report;
}

std::string invariants_json(const InvariantReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["passed"] = report.passed();
  j["failures"] = report.failures();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks) {
    j["checks"].push_back({{"suite", c.suite},
                           {"name", c.name},
                           {"passed", c.passed},
                           {"value", c.value},
                           {"threshold", c.threshold},
                           {"detail", c.detail}});
  }
  return j.dump(2) + "\n";
}

}  // namespace gpvit
