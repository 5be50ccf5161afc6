#pragma once

#include <string>
#include <vector>

#include "ndm/tape.hpp"

namespace ndm {

enum class TaskKind { kClassification, kRegression };

struct LossBreakdown {
  double l_task = 0;
  double l_curv = 0;
  double l_vol = 0;
  double l_geo = 0;
  double l_total = 0;
};

// Softmax cross-entropy for one sample: logits 1-D, integer label.
// Stabilized by subtracting the max logit as a constant shift.
inline Var cross_entropy_with_logits(Tape& tape, Var logits, std::size_t label) {
  const Array& z = logits.val();
  if (label >= z.numel()) throw Error("cross_entropy: label out of range");
  double zmax = z.data[0];
  for (double v : z.data) zmax = std::max(zmax, v);
  Var shifted = tape.shift(logits, -zmax);
  Var lse = tape.log(tape.sum(tape.exp(shifted)));
  return lse - tape.slice(shifted, label, 1);
}

// Mean-squared error for one sample (mean over output coordinates).
inline Var squared_error(Tape& tape, Var prediction, const std::vector<double>& target) {
  if (prediction.val().numel() != target.size())
    throw Error("squared_error: shape mismatch");
  Var t = tape.constant(Array::vec(target));
  return tape.mean(tape.square(prediction - t));
}

// Batch-mean task loss over per-sample predictions.
inline Var task_loss(Tape& tape, const std::vector<Var>& predictions,
                     const std::vector<std::vector<double>>& targets,
                     const std::vector<std::size_t>& labels, TaskKind kind) {
  std::size_t n = predictions.size();
  if (n == 0) throw Error("task_loss: empty batch");
  Var acc = kind == TaskKind::kClassification
                ? cross_entropy_with_logits(tape, predictions[0], labels[0])
                : squared_error(tape, predictions[0], targets[0]);
  for (std::size_t b = 1; b < n; ++b)
    acc = acc + (kind == TaskKind::kClassification
                     ? cross_entropy_with_logits(tape, predictions[b], labels[b])
                     : squared_error(tape, predictions[b], targets[b]));
  return tape.scale(acc, 1.0 / static_cast<double>(n));
}

// Mean of R^2 over all (layer, sample) pairs.
inline Var curvature_loss(Tape& tape, const std::vector<Var>& ricci_scalars) {
  if (ricci_scalars.empty()) throw Error("curvature_loss: empty batch");
  Var acc = tape.square(ricci_scalars[0]);
  for (std::size_t i = 1; i < ricci_scalars.size(); ++i)
    acc = acc + tape.square(ricci_scalars[i]);
  return tape.scale(acc, 1.0 / static_cast<double>(ricci_scalars.size()));
}

// Population variance of sqrt(det g) per layer, averaged across layers.
// A single-sample layer contributes zero variance.
inline Var volume_loss(Tape& tape, const std::vector<std::vector<Var>>& volumes_per_layer) {
  if (volumes_per_layer.empty()) throw Error("volume_loss: empty batch");
  Var acc = tape.constant(0.0);
  for (const auto& layer_vols : volumes_per_layer) {
    if (layer_vols.empty()) throw Error("volume_loss: empty layer batch");
    Var all = layer_vols[0];
    for (std::size_t i = 1; i < layer_vols.size(); ++i)
      all = tape.concat(all, layer_vols[i]);
    acc = acc + tape.variance(all);
  }
  return tape.scale(acc, 1.0 / static_cast<double>(volumes_per_layer.size()));
}

// L_total = L_task + lambda * (w_curv * L_curv + w_vol * L_vol).
inline Var total_loss(Tape& tape, Var l_task, Var l_curv, Var l_vol, double lambda,
                      double w_curv, double w_vol, LossBreakdown* breakdown = nullptr) {
  if (lambda < 0 || w_curv < 0 || w_vol < 0)
    throw Error("total_loss: weights must be non-negative");
  Var l_geo = tape.scale(l_curv, w_curv) + tape.scale(l_vol, w_vol);
  Var total = l_task + tape.scale(l_geo, lambda);
  if (breakdown) {
    breakdown->l_task = l_task.scalar();
    breakdown->l_curv = l_curv.scalar();
    breakdown->l_vol = l_vol.scalar();
    breakdown->l_geo = l_geo.scalar();
    breakdown->l_total = total.scalar();
  }
  return total;
}

}  // namespace ndm
