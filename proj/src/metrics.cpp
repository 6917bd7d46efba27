#include "wadenet/metrics.hpp"

#include "wadenet/error.hpp"

namespace wadenet {

std::vector<std::vector<long long>> confusion_matrix(
    std::span<const int> y_true, std::span<const int> y_pred,
    int num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw ContractError("confusion_matrix label count mismatch");
  }
  std::vector<std::vector<long long>> confusion(
      static_cast<std::size_t>(num_classes),
      std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw ContractError("confusion_matrix label out of range");
    }
    ++confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return confusion;
}

double accuracy(const std::vector<std::vector<long long>>& confusion) {
  long long correct = 0, total = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    correct += confusion[i][i];
    for (long long v : confusion[i]) total += v;
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                   : 0.0;
}

std::vector<double> per_class_f1(
    const std::vector<std::vector<long long>>& confusion) {
  const std::size_t k = confusion.size();
  std::vector<double> f1(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    long long true_count = 0, pred_count = 0;
    for (std::size_t j = 0; j < k; ++j) {
      true_count += confusion[c][j];
      pred_count += confusion[j][c];
    }
    const long long hits = confusion[c][c];
    const double precision =
        pred_count > 0 ? static_cast<double>(hits) / pred_count : 0.0;
    const double recall =
        true_count > 0 ? static_cast<double>(hits) / true_count : 0.0;
    f1[c] = (precision + recall) > 0.0
                ? 2.0 * precision * recall / (precision + recall)
                : 0.0;
  }
  return f1;
}

double macro_f1(const std::vector<std::vector<long long>>& confusion) {
  if (confusion.empty()) return 0.0;
  const auto f1 = per_class_f1(confusion);
  double total = 0.0;
  for (double v : f1) total += v;
  return total / static_cast<double>(f1.size());
}

}  // namespace wadenet
