#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcam/data.hpp"
#include "gcam/gradcam.hpp"
#include "gcam/model.hpp"

namespace gcam {

/// One row of an evaluation report. Optional cells are written
/// empty in CSV (the original-model rows carry no drift, distance or
/// dominance).
struct EvalRow {
    std::string model_tag;
    std::string dataset_tag;
    double accuracy = 0;
    std::optional<double> score_drift;    // max |y_o - y_n| over images and classes
    std::optional<double> heatmap_dist;   // mean over non-collapsed images of mean |I_T - I_n|
    double zero_heatmap_fraction = 0;     // share of images whose raw heatmap is all zero
    std::optional<double> dominance_ratio;// min over images

    bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    bool operator==(const EvalReport&) const = default;
};

/// What the manipulated explanation is compared against.
enum class TargetKind {
    AllOnes,          // T1
    FixedImage,       // T2: normalized attack target
    BranchMap,        // T3, T4 on stickered data: normalized c_F * F(x)
    OriginalHeatmap,  // T4 on clean data
};

/// Number of worker threads: GCF_THREADS when set (>= 1), otherwise the
/// hardware concurrency.
std::size_t eval_threads();

/// Runs fn(i) for i in [0, n) on up to eval_threads() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Fraction of argmax(y) == label, ties to the lowest class.
template <typename T>
double accuracy(const Model<T>& model, const LabeledDataset& ds);

/// Fraction of predictions equal to labels.
double accuracy_from_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

template <typename T>
double score_drift(const Model<T>& original, const Model<T>& manipulated, const LabeledDataset& ds);

/// Max over classes of |a - b|.
double score_drift_from_scores(std::span<const double> a, std::span<const double> b);

/// Mean absolute difference, (1/N) sum |target - observed|.
template <typename T>
double heatmap_distance(const BasicTensor<T>& target, const BasicTensor<T>& observed);

/// (alpha_K * max A^K) / max_{k<K} (|alpha_k| * max A^k) for the last channel.
template <typename T>
double dominance_ratio(const GradCamResult<T>& r);

template <typename T>
EvalRow evaluate_original(const Model<T>& original, const LabeledDataset& ds, const std::string& dataset_tag);

template <typename T>
EvalRow evaluate_attack(const Model<T>& original, const Model<T>& manipulated, const LabeledDataset& ds,
                        const std::string& model_tag, const std::string& dataset_tag, TargetKind target,
                        bool measure_dominance = true);

/// Original, T1, T2, T3 on one dataset.
template <typename T>
EvalReport run_table1(const Model<T>& original, const Model<T>& t1, const Model<T>& t2, const Model<T>& t3,
                      const LabeledDataset& ds);

/// Original and T4 on clean data, then on stickered data.
template <typename T>
EvalReport run_table2(const Model<T>& original, const Model<T>& t4, const LabeledDataset& clean,
                      const LabeledDataset& stickered);

/// General report: original on `clean`, each attacked model on `clean`
/// (target chosen from its attack record), and with `stickered` the same
/// again on stickered data. Row order follows `attacked`.
template <typename T>
EvalReport run_report(const Model<T>& original, const std::vector<const Model<T>*>& attacked,
                      const LabeledDataset& clean, const LabeledDataset* stickered);

/// Hard score bounds: T1/T2 drift must be exactly 0, T3/T4 drift at most
/// epsilon. Returns one message per violating row.
std::vector<std::string> score_bound_violations(const EvalReport& report, const std::vector<AttackRecord>& attacks);

inline constexpr const char* kCsvHeader =
    "model_tag,dataset_tag,accuracy,score_drift,heatmap_dist,zero_heatmap_fraction,dominance_ratio";

/// Shortest round-trip decimal, '.' separator, independent of locale.
std::string format_number(double v);

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

/// Fixed-width text table, five decimals, '-' for empty cells.
std::string render_report_table(const EvalReport& report);

}  // namespace gcam
