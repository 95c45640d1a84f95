#include "udap/purify.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "udap/ddim.hpp"
#include "udap/graph.hpp"
#include "udap/ops.hpp"
#include "udap/optim.hpp"

namespace udap {
namespace {

void check_image(const Tensor& x, const ModelBundle& bundle) {
  if (!x.defined() || x.shape().size() != 3)
    throw std::invalid_argument("purify: x must be a [C,H,W] image");
  if (x.shape() != bundle.codec.image_shape())
    throw std::invalid_argument("purify: image shape " + shape_str(x.shape()) +
                                " does not match the codec's " +
                                shape_str(bundle.codec.image_shape()));
  if ((x.values() < 0.0f).any() || (x.values() > 1.0f).any())
    throw std::invalid_argument("purify: x values must lie in [0,1]");
}

Tensor decode_clipped(const ModelBundle& bundle, const Shape& latent_shape,
                      const ArrayXf& z_values, const Shape& image_shape) {
  Tensor z = Tensor::from_array(latent_shape, z_values);
  Tensor xb = bundle.codec.decode(z);
  ArrayXf clipped = xb.values().cwiseMax(0.0f).cwiseMin(1.0f);
  return Tensor::from_array(image_shape, std::move(clipped));
}

}  // namespace

const char* termination_str(Termination t) {
  switch (t) {
    case Termination::ThresholdMet: return "threshold_met";
    case Termination::MaxEpochs: return "max_epochs";
    case Termination::AlreadyClean: return "already_clean";
    case Termination::Aborted: return "aborted";
  }
  throw std::logic_error("termination_str: bad termination");
}

Termination termination_from_str(const std::string& s) {
  if (s == "threshold_met") return Termination::ThresholdMet;
  if (s == "max_epochs") return Termination::MaxEpochs;
  if (s == "already_clean") return Termination::AlreadyClean;
  if (s == "aborted") return Termination::Aborted;
  throw std::invalid_argument("unknown termination '" + s + "'");
}

void PurifyConfig::validate(int schedule_total_steps) const {
  if (!(tau > 0.0f) || !std::isfinite(tau))
    throw std::invalid_argument("purify config: tau must be finite and > 0");
  if (max_epochs < 0)
    throw std::invalid_argument("purify config: max_epochs must be >= 0");
  if (t_hat < 1 || t_hat > schedule_total_steps)
    throw std::invalid_argument(
        "purify config: t_hat = " + std::to_string(t_hat) + " outside [1, " +
        std::to_string(schedule_total_steps) + "]");
  if (!(lr > 0.0f) || !std::isfinite(lr))
    throw std::invalid_argument("purify config: lr must be finite and > 0");
}

float calibrate_tau(const ImageSet& clean, const ModelBundle& bundle,
                    int t_hat) {
  if (clean.images.empty())
    throw std::invalid_argument("calibrate_tau: clean set is empty");
  double acc = 0.0;
  for (const Tensor& img : clean.images) {
    check_image(img, bundle);
    Tensor xb = batch_of_one(img);
    Tensor z0 = bundle.codec.encode(xb);
    acc += static_cast<double>(
        ddim_metric_loss(xb, z0, bundle, t_hat).scalar_value());
  }
  return static_cast<float>(acc / static_cast<double>(clean.images.size()));
}

std::pair<Tensor, PurifyTrace> purify(const Tensor& x,
                                      const ModelBundle& bundle,
                                      const PurifyConfig& cfg) {
  cfg.validate(bundle.schedule.total_steps);
  check_image(x, bundle);
  const auto start = std::chrono::steady_clock::now();

  PurifyTrace trace;
  const Tensor xb = batch_of_one(x);
  Tensor z = bundle.codec.encode(xb).detached_copy().set_requires_grad(true);
  const Shape latent_shape = z.shape();

  Adam optimizer({z}, cfg.lr);
  float best_loss = std::numeric_limits<float>::infinity();
  ArrayXf best_z = z.values();
  ArrayXf last_finite_z = z.values();
  ArrayXf final_z = z.values();
  trace.termination = Termination::MaxEpochs;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    try {
      Tape tape;
      Tape::Scope scope(tape);
      Tensor loss = ddim_metric_loss(xb, z, bundle, cfg.t_hat);
      const float loss_v = loss.scalar_value();
      trace.loss_curve.push_back(loss_v);
      last_finite_z = z.values();
      if (loss_v < best_loss) {
        best_loss = loss_v;
        best_z = z.values();
      }
      if (cfg.gate_enabled && loss_v <= cfg.tau) {
        trace.termination = epoch == 0 ? Termination::AlreadyClean
                                       : Termination::ThresholdMet;
        final_z = z.values();
        break;
      }
      backward(loss);
      optimizer.step();
      trace.epochs_run = epoch + 1;
    } catch (const NonFiniteError& e) {
      trace.termination = Termination::Aborted;
      trace.failed = true;
      trace.error = e.what();
      final_z = last_finite_z;
      break;
    }
  }
  if (trace.termination == Termination::MaxEpochs) final_z = best_z;
  trace.best_loss =
      std::isfinite(best_loss) ? best_loss : 0.0f;  // 0 when nothing evaluated

  Tensor x_prime = decode_clipped(bundle, latent_shape, final_z, x.shape());
  trace.change_linf = (x_prime.values() - x.values()).abs().maxCoeff();
  trace.wall_time_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - start)
          .count();
  return {x_prime, trace};
}

std::pair<ImageSet, std::vector<PurifyTrace>> purify_batch(
    const ImageSet& images, const ModelBundle& bundle, const PurifyConfig& cfg,
    int workers) {
  const int n = static_cast<int>(images.images.size());
  if (n == 0) throw std::invalid_argument("purify_batch: empty image set");
  if (workers < 1)
    throw std::invalid_argument("purify_batch: workers must be >= 1");

  std::vector<Tensor> outputs(n);
  std::vector<PurifyTrace> traces(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        auto [xp, tr] = purify(images.images[i], bundle, cfg);
        outputs[i] = xp;
        traces[i] = std::move(tr);
      } catch (const std::exception& e) {
        // Leave the image untouched but flag it; the batch keeps going.
        outputs[i] = images.images[i];
        traces[i].failed = true;
        traces[i].termination = Termination::Aborted;
        traces[i].error = e.what();
      }
    }
  };

  const int thread_count = std::min(workers, n);
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  ImageSet out;
  out.source = images.source;
  for (int i = 0; i < n; ++i) out.add(outputs[i], ImageLabel::Purified);
  return {out, std::move(traces)};
}

}  // namespace udap
