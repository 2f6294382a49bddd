// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/certify.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>

#include "rtpb/dtrans.hpp"
#include "rtpb/grad_check.hpp"
#include "rtpb/layers.hpp"
#include "rtpb/loss.hpp"
#include "rtpb/rng.hpp"

namespace rtpb {

namespace {

// Tensors perturbed by the check and the matching analytic gradients.
struct Probe {
  std::vector<Matrix*> tensors;
  std::vector<Matrix*> grads;
  std::function<double()> value;
  std::function<void()> gradient;
};

std::vector<double> flatten(const std::vector<Matrix*>& ms) {
  std::vector<double> out;
  for (const Matrix* m : ms) out.insert(out.end(), m->flat().begin(), m->flat().end());
  return out;
}

void unflatten(std::span<const double> x, const std::vector<Matrix*>& ms) {
  std::size_t at = 0;
  for (Matrix* m : ms) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(at), x.begin() + static_cast<std::ptrdiff_t>(at + m->size()),
              m->flat().begin());
    at += m->size();
  }
}

GradCheckReport run_probe(Probe& probe, double h, double tol, std::size_t max_coordinates, Rng& rng,
                          std::size_t& checked) {
  const auto x = flatten(probe.tensors);
  for (Matrix* g : probe.grads) g->fill(0.0);
  probe.gradient();
  const auto analytic = flatten(probe.grads);
  if (analytic.size() != x.size()) throw std::logic_error("probe gradient shape mismatch");
  const ScalarFunction f = [&](std::span<const double> xs) {
    unflatten(xs, probe.tensors);
    return probe.value();
  };
  GradCheckReport report;
  if (max_coordinates == 0 || max_coordinates >= x.size()) {
    report = grad_check(f, x, analytic, h, tol);
    checked += x.size();
  } else {
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(max_coordinates);
    std::sort(coords.begin(), coords.end());
    report = grad_check(f, x, analytic, coords, h, tol);
    checked += coords.size();
  }
  unflatten(x, probe.tensors);
  return report;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = scale * rng.normal();
  return m;
}

double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.flat()[i] * b.flat()[i];
  return s;
}

template <typename P>
void collect(P& params, P& grads, const std::vector<std::string>& prefixes, Probe& probe) {
  auto keep = [&](const std::string& name) {
    if (prefixes.empty()) return true;
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  };
  visit_params(params, "", [&](const std::string& name, Matrix& m) {
    if (keep(name)) probe.tensors.push_back(&m);
  });
  visit_params(grads, "", [&](const std::string& name, Matrix& m) {
    if (keep(name)) probe.grads.push_back(&m);
  });
}

// ---- instance builders ----

struct Context {
  Rng rng;
  const CertifyOptions& options;
  std::size_t coordinates = 0;
};

// nullopt rejects the instance: a ReLU input sits within reach of the
// difference step, where central differences straddle the kink.
using Check = std::function<std::optional<GradCheckReport>(Context&)>;

constexpr double kKinkMargin = 1e-3;

bool near_kink(const std::vector<EncoderLayerCache>& layers) {
  for (const auto& layer : layers)
    for (double v : layer.ffn_pre.flat())
      if (std::abs(v) < kKinkMargin) return true;
  return false;
}

GradCheckReport loss_check(Context& ctx, const std::string& which) {
  Rng& rng = ctx.rng;
  const std::size_t slots = 2 + rng.below(8);
  Matrix z = random_matrix(1, slots, rng, 2.0);
  const int y = static_cast<int>(rng.below(slots));
  BiasVector bias;
  for (std::size_t i = 0; i < slots; ++i) bias.values.push_back(rng.uniform(-1.0, 4.0));
  BaselineSpec spec;
  for (std::size_t i = 0; i < slots; ++i) spec.class_counts.push_back(1 + rng.below(1000));
  if (which == "reweight") spec.kind = BaselineKind::Reweight;
  if (which == "class_balanced") spec.kind = BaselineKind::ClassBalanced;
  if (which == "focal") spec.kind = BaselineKind::Focal;
  if (which == "ldam") spec.kind = BaselineKind::Ldam;
  auto eval = [&]() -> LossOutput {
    if (which == "ce") return ce(z.flat(), y);
    if (which == "rtpb_ce") return rtpb_ce(z.flat(), bias, y);
    return baseline_loss(spec, z.flat(), y);
  };
  Matrix g(1, slots);
  Probe probe{{&z}, {&g}, [&] { return eval().value; }, [&] {
                const auto out = eval();
                std::copy(out.grad_logits.begin(), out.grad_logits.end(), g.flat().begin());
              }};
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

GradCheckReport linear_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const std::size_t n = 1 + rng.below(4), in = 1 + rng.below(6), out = 1 + rng.below(6);
  Linear p = make_linear(in, out, rng);
  p.bias = random_matrix(1, out, rng);
  Matrix x = random_matrix(n, in, rng);
  const Matrix up = random_matrix(n, out, rng);
  Linear gp = zeros_like(p);
  Matrix gx(n, in);
  Probe probe{{&x, &p.weight, &p.bias}, {&gx, &gp.weight, &gp.bias},
              [&] { return dot(linear_forward(p, x), up); },
              [&] { gx = linear_backward(p, x, up, gp); }};
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

GradCheckReport layer_norm_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const std::size_t n = 1 + rng.below(4), d = 2 + rng.below(7);
  LayerNorm p = make_layer_norm(d);
  p.gain = random_matrix(1, d, rng);
  p.shift = random_matrix(1, d, rng);
  Matrix x = random_matrix(n, d, rng);
  const Matrix up = random_matrix(n, d, rng);
  LayerNorm gp{Matrix(1, d), Matrix(1, d)};
  Matrix gx(n, d);
  Probe probe{{&x, &p.gain, &p.shift}, {&gx, &gp.gain, &gp.shift},
              [&] {
                LayerNormCache c;
                return dot(layer_norm_forward(p, x, c), up);
              },
              [&] {
                LayerNormCache c;
                layer_norm_forward(p, x, c);
                gx = layer_norm_backward(p, c, up, gp);
              }};
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

GradCheckReport attention_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const std::size_t n = 1 + rng.below(5), dk = 1 + rng.below(6), dv = 1 + rng.below(6);
  Matrix q = random_matrix(n, dk, rng), k = random_matrix(n, dk, rng), v = random_matrix(n, dv, rng);
  const Matrix up = random_matrix(n, dv, rng);
  Matrix gq, gk, gv;
  gq = Matrix(n, dk);
  gk = Matrix(n, dk);
  gv = Matrix(n, dv);
  Probe probe{{&q, &k, &v}, {&gq, &gk, &gv},
              [&] {
                AttentionCache c;
                return dot(attention_forward(q, k, v, c), up);
              },
              [&] {
                AttentionCache c;
                attention_forward(q, k, v, c);
                auto g = attention_backward(q, k, v, c, up);
                gq = g.d_q;
                gk = g.d_k;
                gv = g.d_v;
              }};
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

GradCheckReport multi_head_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const int heads = 1 + static_cast<int>(rng.below(2));
  const std::size_t n = 1 + rng.below(4), d = static_cast<std::size_t>(heads) * (1 + rng.below(4));
  MultiHeadAttention p = make_multi_head_attention(d, rng);
  MultiHeadAttention gp = zeros_like_params(p);
  Matrix x = random_matrix(n, d, rng);
  const Matrix up = random_matrix(n, d, rng);
  Matrix gx(n, d);
  Probe probe;
  probe.tensors.push_back(&x);
  probe.grads.push_back(&gx);
  collect(p, gp, {}, probe);
  probe.value = [&] {
    MultiHeadCache c;
    return dot(multi_head_attention_forward(p, x, heads, c), up);
  };
  probe.gradient = [&] {
    MultiHeadCache c;
    multi_head_attention_forward(p, x, heads, c);
    gx = multi_head_attention_backward(p, c, heads, up, gp);
  };
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

std::optional<GradCheckReport> encoder_layer_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const int heads = 2;
  const std::size_t n = 1 + rng.below(4), d = 4 + 2 * rng.below(3), d_ff = 4 + rng.below(8);
  EncoderLayer p = make_encoder_layer(d, d_ff, rng);
  p.norm1.gain = random_matrix(1, d, rng);
  p.norm2.shift = random_matrix(1, d, rng, 0.5);
  EncoderLayer gp = zeros_like_params(p);
  Matrix x = random_matrix(n, d, rng);
  const Matrix up = random_matrix(n, d, rng);
  Matrix gx(n, d);
  Probe probe;
  probe.tensors.push_back(&x);
  probe.grads.push_back(&gx);
  collect(p, gp, {}, probe);
  probe.value = [&] {
    EncoderLayerCache c;
    return dot(encoder_layer_forward(p, x, heads, c), up);
  };
  probe.gradient = [&] {
    EncoderLayerCache c;
    encoder_layer_forward(p, x, heads, c);
    gx = encoder_layer_backward(p, c, heads, up, gp);
  };
  {
    EncoderLayerCache c;
    encoder_layer_forward(p, x, heads, c);
    if (near_kink({c})) return std::nullopt;
  }
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

// Toy model used by every DTrans check.
DTransConfig toy_config() {
  DTransConfig c;
  c.d_model = 16;
  c.d_v = 8;
  c.d_pos = 8;
  c.d_embed = 8;
  c.num_heads = 2;
  c.object_layers = 2;
  c.relation_layers = 1;
  c.d_ff = 32;
  c.num_object_classes = 5;
  c.num_relation_slots = 4;
  return c;
}

SceneImage random_scene(const DTransConfig& c, std::size_t n, Rng& rng) {
  SceneImage image;
  for (std::size_t i = 0; i < n; ++i) {
    ObjectProposal p;
    const double x1 = rng.uniform(0.0, 0.6), y1 = rng.uniform(0.0, 0.6);
    p.box = {x1, y1, x1 + rng.uniform(0.05, 0.4), y1 + rng.uniform(0.05, 0.4)};
    for (int k = 0; k < c.d_v; ++k) p.visual_feature.push_back(rng.normal());
    p.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_object_classes)));
    std::vector<double> s;
    for (int k = 0; k < c.num_object_classes; ++k) s.push_back(rng.uniform(0.01, 1.0));
    double total = 0.0;
    for (double v : s) total += v;
    for (double& v : s) v /= total;
    p.detector_scores = s;
    image.proposals.push_back(p);
  }
  for (const auto& pair : directed_pairs(static_cast<int>(n))) {
    std::vector<double> u;
    for (int k = 0; k < c.d_v; ++k) u.push_back(rng.normal());
    image.union_features[pair] = u;
  }
  return image;
}

GradCheckReport dtrans_embed_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const auto c = toy_config();
  auto params = init_dtrans(c, rng.next());
  auto grads = zeros_like_params(params);
  const auto image = random_scene(c, 1 + rng.below(4), rng);
  std::vector<int> labels;
  for (const auto& p : image.proposals) labels.push_back(p.label);
  const Matrix up = random_matrix(image.proposals.size(), static_cast<std::size_t>(c.d_model), rng);
  Probe probe;
  collect(params, grads, {"position", "label_embedding", "object_fusion"}, probe);
  probe.value = [&] {
    EmbedCache cache;
    return dot(embed_objects(params, image.proposals, labels, cache), up);
  };
  probe.gradient = [&] {
    EmbedCache cache;
    embed_objects(params, image.proposals, labels, cache);
    embed_objects_backward(params, cache, up, grads);
  };
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

std::optional<GradCheckReport> dtrans_encode_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const auto c = toy_config();
  auto params = init_dtrans(c, rng.next());
  auto grads = zeros_like_params(params);
  const std::size_t n = 1 + rng.below(4);
  Matrix tokens = random_matrix(n, static_cast<std::size_t>(c.d_model), rng);
  Matrix g_tokens(n, static_cast<std::size_t>(c.d_model));
  const Matrix up = random_matrix(n, static_cast<std::size_t>(c.d_model), rng);
  Probe probe{{&tokens}, {&g_tokens}, {}, {}};
  collect(params, grads, {"object_encoder"}, probe);
  probe.value = [&] {
    EncoderStackCache cache;
    return dot(encode_objects(c, params, tokens, cache), up);
  };
  probe.gradient = [&] {
    EncoderStackCache cache;
    encode_objects(c, params, tokens, cache);
    g_tokens = encode_objects_backward(c, params, cache, up, grads);
  };
  {
    EncoderStackCache cache;
    encode_objects(c, params, tokens, cache);
    if (near_kink(cache)) return std::nullopt;
  }
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

GradCheckReport dtrans_fuse_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const auto c = toy_config();
  auto params = init_dtrans(c, rng.next());
  auto grads = zeros_like_params(params);
  const std::size_t n = 2 + rng.below(3);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto pairs = directed_pairs(static_cast<int>(n));
  Matrix objects = random_matrix(n, d, rng);
  const Matrix unions = random_matrix(pairs.size(), static_cast<std::size_t>(c.d_v), rng);
  Matrix g_objects(n, d);
  const Matrix up = random_matrix(pairs.size(), d, rng);
  Probe probe{{&objects}, {&g_objects}, {}, {}};
  collect(params, grads, {"pair_fusion"}, probe);
  probe.value = [&] {
    FuseCache cache;
    return dot(fuse_pairs(params, objects, unions, pairs, cache), up);
  };
  probe.gradient = [&] {
    FuseCache cache;
    fuse_pairs(params, objects, unions, pairs, cache);
    g_objects = fuse_pairs_backward(params, cache, n, d, up, grads);
  };
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

std::optional<GradCheckReport> dtrans_relation_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const auto c = toy_config();
  auto params = init_dtrans(c, rng.next());
  auto grads = zeros_like_params(params);
  const std::size_t p = 1 + rng.below(6);
  const auto d = static_cast<std::size_t>(c.d_model);
  Matrix tokens = random_matrix(p, d, rng);
  Matrix g_tokens(p, d);
  const Matrix up = random_matrix(p, static_cast<std::size_t>(c.num_relation_slots), rng);
  Probe probe{{&tokens}, {&g_tokens}, {}, {}};
  collect(params, grads, {"relation_encoder", "relation_classifier"}, probe);
  probe.value = [&] {
    RelationHeadCache cache;
    return dot(encode_relations_and_classify(c, params, tokens, cache), up);
  };
  probe.gradient = [&] {
    RelationHeadCache cache;
    encode_relations_and_classify(c, params, tokens, cache);
    g_tokens = encode_relations_backward(c, params, cache, up, grads);
  };
  {
    RelationHeadCache cache;
    encode_relations_and_classify(c, params, tokens, cache);
    if (near_kink(cache.layers)) return std::nullopt;
  }
  return run_probe(probe, ctx.options.step, ctx.options.tol, 0, rng, ctx.coordinates);
}

std::optional<GradCheckReport> dtrans_full_check(Context& ctx) {
  Rng& rng = ctx.rng;
  const auto c = toy_config();
  auto params = init_dtrans(c, rng.next());
  auto grads = zeros_like_params(params);
  const auto image = random_scene(c, 2 + rng.below(3), rng);
  const Task task = rng.below(2) == 0 ? Task::PredCls : Task::SGCls;
  const std::size_t n = image.proposals.size();
  const Matrix up_obj = random_matrix(n, static_cast<std::size_t>(c.num_object_classes), rng);
  const Matrix up_rel = random_matrix(n * (n - 1), static_cast<std::size_t>(c.num_relation_slots), rng);
  Probe probe;
  collect(params, grads, {}, probe);
  probe.value = [&] {
    DTransCache cache;
    const auto out = forward(c, params, image, task, cache);
    return dot(out.object_logits, up_obj) + dot(out.relation_logits, up_rel);
  };
  probe.gradient = [&] {
    DTransCache cache;
    forward(c, params, image, task, cache);
    backward(c, params, cache, up_obj, up_rel, grads);
  };
  {
    DTransCache cache;
    forward(c, params, image, task, cache);
    if (near_kink(cache.objects) || near_kink(cache.relations.layers)) return std::nullopt;
  }
  return run_probe(probe, ctx.options.step, ctx.options.model_tol, ctx.options.model_coordinates, rng,
                   ctx.coordinates);
}

struct NamedCheck {
  std::string name;
  Check run;
  bool model_level = false;
};

const std::vector<NamedCheck>& all_checks() {
  static const std::vector<NamedCheck> checks = [] {
    std::vector<NamedCheck> out;
    for (const char* loss : {"ce", "rtpb_ce", "reweight", "class_balanced", "focal", "ldam"}) {
      const std::string name = loss;
      out.push_back({"loss." + name, [name](Context& ctx) { return loss_check(ctx, name); }});
    }
    out.push_back({"numerics.linear", linear_check});
    out.push_back({"numerics.layer_norm", layer_norm_check});
    out.push_back({"numerics.attention", attention_check});
    out.push_back({"numerics.multi_head_attention", multi_head_check});
    out.push_back({"numerics.encoder_layer", encoder_layer_check});
    out.push_back({"dtrans.embed_objects", dtrans_embed_check});
    out.push_back({"dtrans.encode_objects", dtrans_encode_check});
    out.push_back({"dtrans.fuse_pairs", dtrans_fuse_check});
    out.push_back({"dtrans.relation_head", dtrans_relation_check});
    out.push_back({"dtrans.full", dtrans_full_check, true});
    return out;
  }();
  return checks;
}

}  // namespace

std::vector<std::string> certify_check_names() {
  std::vector<std::string> names;
  for (const auto& c : all_checks()) names.push_back(c.name);
  return names;
}

std::vector<CheckOutcome> certify_gradients(const CertifyOptions& options, const std::vector<std::string>& names) {
  if (options.instances < 1) throw std::invalid_argument("certify: instances must be >= 1");
  for (const auto& n : names) {
    const auto& checks = all_checks();
    if (std::none_of(checks.begin(), checks.end(), [&](const NamedCheck& c) { return c.name == n; })) {
      throw std::invalid_argument("certify: unknown check '" + n + "'");
    }
  }
  std::vector<CheckOutcome> outcomes;
  const auto& checks = all_checks();
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    const auto& check = checks[ci];
    if (!names.empty() && std::find(names.begin(), names.end(), check.name) == names.end()) continue;
    CheckOutcome outcome;
    outcome.name = check.name;
    outcome.tol = check.model_level ? options.model_tol : options.tol;
    for (int i = 0; i < options.instances; ++i) {
      Context ctx{Rng(substream_seed(substream_seed(options.seed, ci), static_cast<std::uint64_t>(i))), options};
      std::optional<GradCheckReport> report;
      for (int attempt = 0; attempt < 100 && !report; ++attempt) {
        report = check.run(ctx);
        if (!report) ++outcome.resampled;
      }
      if (!report) throw std::runtime_error("certify: no kink-free instance for " + check.name);
      outcome.coordinates += ctx.coordinates;
      outcome.max_rel_error = std::max(outcome.max_rel_error, report->max_rel_error);
      if (!report->passed) ++outcome.failures;
      ++outcome.instances;
    }
    outcomes.push_back(outcome);
  }
  return outcomes;
}

nlohmann::json to_json(const CheckOutcome& o) {
  return {{"name", o.name},   {"instances", o.instances}, {"coordinates", o.coordinates}, {"max_rel_error", o.max_rel_error},
          {"tol", o.tol},     {"failures", o.failures},   {"resampled", o.resampled},   {"passed", o.passed()}};
}

}  // namespace rtpb
