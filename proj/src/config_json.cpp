#include "riot/config_json.hpp"

#include <string>

namespace riot {
namespace {

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& target) {
  if (!doc.contains(key)) return;
  try {
    target = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> known, const char* what) {
  if (!doc.is_object()) throw InvalidInput(std::string(what) + " must be a JSON object");
  for (const auto& item : doc.items()) {
    bool found = false;
    for (const char* k : known) found = found || item.key() == k;
    if (!found) throw InvalidInput(std::string("unknown ") + what + " key '" + item.key() + "'");
  }
}

}  // namespace

nlohmann::json to_json(const HyperParams& p) {
  return {{"lambda", p.lambda},
          {"lambda_u", p.lambda_u},
          {"lambda_v", p.lambda_v},
          {"delta", p.delta},
          {"step_size", p.step_size},
          {"outer_iters", p.outer_iters},
          {"inner_iters", p.inner_iters},
          {"inner_tol", p.inner_tol},
          {"sinkhorn_tol", p.sinkhorn_tol},
          {"sinkhorn_max_iters", p.sinkhorn_max_iters}};
}

nlohmann::json to_json(const KernelSpec& k) {
  return {{"kind", to_string(k.kind)}, {"gamma", k.gamma}, {"c0", k.c0}, {"degree", k.degree}};
}

HyperParams hyper_params_from_json(const nlohmann::json& doc, HyperParams p) {
  reject_unknown(doc,
                 {"lambda", "lambda_u", "lambda_v", "delta", "step_size", "outer_iters", "inner_iters", "inner_tol",
                  "sinkhorn_tol", "sinkhorn_max_iters"},
                 "hyper-parameter");
  read_key(doc, "lambda", p.lambda);
  read_key(doc, "lambda_u", p.lambda_u);
  read_key(doc, "lambda_v", p.lambda_v);
  read_key(doc, "delta", p.delta);
  read_key(doc, "step_size", p.step_size);
  read_key(doc, "outer_iters", p.outer_iters);
  read_key(doc, "inner_iters", p.inner_iters);
  read_key(doc, "inner_tol", p.inner_tol);
  read_key(doc, "sinkhorn_tol", p.sinkhorn_tol);
  read_key(doc, "sinkhorn_max_iters", p.sinkhorn_max_iters);
  p.validate();
  return p;
}

KernelSpec kernel_spec_from_json(const nlohmann::json& doc, KernelSpec k) {
  reject_unknown(doc, {"kind", "gamma", "c0", "degree"}, "kernel");
  if (doc.contains("kind")) {
    std::string kind;
    read_key(doc, "kind", kind);
    k.kind = kernel_kind_from_string(kind);
  }
  read_key(doc, "gamma", k.gamma);
  read_key(doc, "c0", k.c0);
  read_key(doc, "degree", k.degree);
  k.validate();
  return k;
}

}  // namespace riot
