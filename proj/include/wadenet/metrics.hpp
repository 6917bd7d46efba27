#pragma once

#include <span>
#include <vector>

namespace wadenet {

// Rows are true classes, columns are predictions.
std::vector<std::vector<long long>> confusion_matrix(
    std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

double accuracy(const std::vector<std::vector<long long>>& confusion);

// Per-class F1 with the zero convention: a class with no instances or no
// predictions gets precision = recall = F1 = 0.
std::vector<double> per_class_f1(
    const std::vector<std::vector<long long>>& confusion);

// Unweighted mean of the per-class F1 scores.
double macro_f1(const std::vector<std::vector<long long>>& confusion);

}  // namespace wadenet
