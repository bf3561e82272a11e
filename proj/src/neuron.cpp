#include "qsnn/neuron.hpp"

namespace qsnn::neuron {

Tensor lif_integrate(const Tensor& prev_membrane, const Tensor& synaptic_input,
                     const LifParams& params) {
  params.validate();
  check_same_shape("lif_integrate", prev_membrane, synaptic_input);
  Tensor out(prev_membrane.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = lif_update_scalar(params.tau, prev_membrane[i], synaptic_input[i]);
  return out;
}

Tensor fire(const Tensor& membrane, const LifParams& params) {
  params.validate();
  Tensor out(membrane.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fire_scalar(membrane[i], params.theta);
  return out;
}

Tensor hard_reset(const Tensor& membrane, const Tensor& spikes) {
  check_same_shape("hard_reset", membrane, spikes);
  Tensor out(membrane.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    float s = spikes[i];
    if (s != 0.f && s != 1.f)
      throw std::invalid_argument("hard_reset: spikes must be binary, got " + std::to_string(s));
    out[i] = membrane[i] * (1.f - s);
  }
  return out;
}

Tensor surrogate_grad(const Tensor& membrane, const LifParams& params) {
  params.validate();
  Tensor out(membrane.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = surrogate_scalar(membrane[i], params.theta, params.beta);
  return out;
}

ad::NodePtr fire_node(ad::NodePtr membrane, const LifParams& params) {
  params.validate();
  float theta = params.theta, beta = params.beta;
  const Tensor& u = membrane->value;
  Tensor out(u.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fire_scalar(u[i], theta);
  auto n = std::make_shared<ad::Node>(std::move(out), "fire");
  n->parents = {membrane};
  n->backward = [membrane, theta, beta](ad::Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      membrane->grad[i] += self.grad[i] * surrogate_scalar(membrane->value[i], theta, beta);
  };
  return n;
}

ad::NodePtr hard_reset_node(ad::NodePtr membrane, const Tensor& spike_values) {
  check_same_shape("hard_reset", membrane->value, spike_values);
  Tensor gate(spike_values.shape);
  for (int64_t i = 0; i < gate.numel(); ++i) gate[i] = 1.f - spike_values[i];
  return ad::mul_const(membrane, std::move(gate), "hard-reset");
}

}  // namespace qsnn::neuron
