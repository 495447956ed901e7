#include <algorithm>

#include "steerkit/errors.hpp"
#include "steerkit/subspace.hpp"

namespace steerkit {

std::string to_string(TraceSite site) {
  switch (site) {
    case TraceSite::h_in: return "h_in";
    case TraceSite::post_attn: return "post_attn";
    case TraceSite::mlp_in: return "mlp_in";
    case TraceSite::post_mlp: return "post_mlp";
    case TraceSite::post_block: return "post_block";
  }
  return "post_block";
}

TraceSite trace_site_from_string(const std::string& name) {
  if (name == "h_in") return TraceSite::h_in;
  if (name == "post_attn") return TraceSite::post_attn;
  if (name == "mlp_in") return TraceSite::mlp_in;
  if (name == "post_mlp") return TraceSite::post_mlp;
  if (name == "post_block") return TraceSite::post_block;
  throw ConfigurationError("unknown trace site '" + name + "'");
}

const Sequence& site_values(const BlockTrace& t, TraceSite site) {
  switch (site) {
    case TraceSite::h_in: return t.h_in;
    case TraceSite::post_attn: return t.post_attn;
    case TraceSite::mlp_in: return t.mlp_in;
    case TraceSite::post_mlp: return t.post_mlp;
    case TraceSite::post_block: return t.post_block;
  }
  return t.post_block;
}

OracleTarget compute_oracle(const BlockTrace& base, const BlockTrace& ft, TraceSite site) {
  const Sequence& b = site_values(base, site);
  const Sequence& f = site_values(ft, site);
  if (b.size() != f.size()) throw DimensionError("compute_oracle: position counts differ");
  OracleTarget o;
  o.site = site;
  o.delta.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) o.delta.push_back(sub(f[i], b[i]));
  return o;
}

double shift_cosine(const Vector& adapter_shift, const Vector& weight_shift) {
  const double na = norm2(adapter_shift);
  const double nb = norm2(weight_shift);
  if (na == 0.0 || nb == 0.0) throw UndefinedRatioError("shift_cosine: zero shift");
  return std::clamp(dot(adapter_shift, weight_shift) / (na * nb), -1.0, 1.0);
}

Vector weight_shift(const GluParams& p, const WeightUpdate& w, const Vector& h) {
  return sub(glu_forward(apply_weight_update(p, w), h), glu_forward(p, h));
}

Vector trace_shift_cosines(const BlockTrace& base, const GluParams& p,
                           const SteeringAdapter& adapter, const WeightUpdate& w) {
  const Sequence& at = adapter.locus == Locus::pre_mlp    ? base.mlp_in
                       : adapter.locus == Locus::post_mlp ? base.post_mlp
                                                          : base.post_block;
  Vector out(base.positions());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = shift_cosine(adapter.shift(at[i]), weight_shift(p, w, base.mlp_in[i]));
  }
  return out;
}

}  // namespace steerkit
