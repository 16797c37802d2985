#include "gcam/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace gcam {

std::size_t eval_threads() {
    if (const char* env = std::getenv("GCF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(eval_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double accuracy_from_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.empty()) throw InvalidArgument("accuracy of an empty dataset");
    if (predictions.size() != labels.size()) throw DimensionError("labels", "prediction/label count mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

template <typename T>
double accuracy(const Model<T>& model, const LabeledDataset& ds) {
    if (ds.size() == 0) throw InvalidArgument("accuracy of an empty dataset");
    std::vector<std::size_t> pred(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        pred[i] = argmax<T>(forward_full(model, ds.images[i].template cast<T>()).y.data());
    });
    return accuracy_from_predictions(pred, ds.labels);
}

double score_drift_from_scores(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("classes", "score vectors have different class counts");
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

template <typename T>
double score_drift(const Model<T>& original, const Model<T>& manipulated, const LabeledDataset& ds) {
    if (validate_model(original).class_count != validate_model(manipulated).class_count)
        throw DimensionError("classes", "models have different class counts");
    std::vector<double> drift(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto x = ds.images[i].template cast<T>();
        const auto a = forward_full(original, x).y.template cast<double>();
        const auto b = forward_full(manipulated, x).y.template cast<double>();
        drift[i] = score_drift_from_scores(a.data(), b.data());
    });
    double d = 0;
    for (double v : drift) d = std::max(d, v);
    return d;
}

template <typename T>
double heatmap_distance(const BasicTensor<T>& target, const BasicTensor<T>& observed) {
    if (target.size() != observed.size() || target.size() == 0)
        throw DimensionError("heatmap", "heatmap shapes differ: " + shape_string(target.shape()) + " vs " +
                                            shape_string(observed.shape()));
    double sum = 0;
    for (std::size_t i = 0; i < target.size(); ++i)
        sum += std::abs(static_cast<double>(target[i]) - static_cast<double>(observed[i]));
    return sum / static_cast<double>(target.size());
}

template <typename T>
double dominance_ratio(const GradCamResult<T>& r) {
    const std::size_t K = r.alphas.size() - 1;
    auto channel_max = [&](std::size_t k) {
        double m = 0;
        for (T v : r.A.channel(k)) m = std::max(m, static_cast<double>(v));
        return m;
    };
    double rest = 0;
    for (std::size_t k = 0; k < K; ++k) rest = std::max(rest, std::abs(static_cast<double>(r.alphas[k])) * channel_max(k));
    const double injected = static_cast<double>(r.alphas[K]) * channel_max(K);
    if (rest == 0) return injected > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    return injected / rest;
}

namespace {

struct ImageStats {
    std::size_t prediction = 0;
    double drift = 0;
    double distance = 0;
    bool collapsed = false;
    double dominance = 0;
};

template <typename T>
BasicTensor<T> target_map(TargetKind kind, const Model<T>& manipulated, const BasicTensor<T>& x,
                          const GradCamResult<T>& original, const Shape& hw) {
    switch (kind) {
        case TargetKind::AllOnes: return BasicTensor<T>(hw, T(1));
        case TargetKind::FixedImage: {
            if (!manipulated.attack || !manipulated.attack->config.target)
                throw InvalidArgument("fixed-image target requires an attack record with a target");
            return normalize_heatmap(manipulated.attack->config.target->template cast<T>().reshaped(hw));
        }
        case TargetKind::BranchMap: {
            auto f = branch_map(manipulated, x);
            if (!f) throw InvalidArgument("branch-map target requires a featuremap branch");
            return normalize_heatmap(f->reshaped(hw));
        }
        case TargetKind::OriginalHeatmap: return original.heatmap_norm;
    }
    throw InvalidArgument("unknown target kind");
}

}  // namespace

template <typename T>
EvalRow evaluate_original(const Model<T>& original, const LabeledDataset& ds, const std::string& dataset_tag) {
    if (ds.size() == 0) throw InvalidArgument("evaluation dataset is empty");
    std::vector<ImageStats> stats(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto r = explain(original, ds.images[i].template cast<T>());
        stats[i].prediction = r.class_index;
        stats[i].collapsed = r.collapsed();
    });
    EvalRow row;
    row.model_tag = "original";
    row.dataset_tag = dataset_tag;
    std::vector<std::size_t> pred(ds.size());
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        pred[i] = stats[i].prediction;
        zeros += stats[i].collapsed;
    }
    row.accuracy = accuracy_from_predictions(pred, ds.labels);
    row.zero_heatmap_fraction = static_cast<double>(zeros) / static_cast<double>(ds.size());
    return row;
}

template <typename T>
EvalRow evaluate_attack(const Model<T>& original, const Model<T>& manipulated, const LabeledDataset& ds,
                        const std::string& model_tag, const std::string& dataset_tag, TargetKind target,
                        bool measure_dominance) {
    if (ds.size() == 0) throw InvalidArgument("evaluation dataset is empty");
    const ModelMeta mo = validate_model(original);
    const ModelMeta mn = validate_model(manipulated);
    if (mo.class_count != mn.class_count) throw DimensionError("classes", "models have different class counts");
    const Shape hw{mn.a_height, mn.a_width};

    std::vector<ImageStats> stats(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto x = ds.images[i].template cast<T>();
        const auto ro = explain(original, x);
        const auto rn = explain(manipulated, x);
        ImageStats& s = stats[i];
        s.prediction = rn.class_index;
        s.drift = score_drift_from_scores(ro.scores.template cast<double>().data(),
                                          rn.scores.template cast<double>().data());
        s.collapsed = rn.collapsed();
        s.distance = heatmap_distance(target_map(target, manipulated, x, ro, hw), rn.heatmap_norm);
        if (measure_dominance) s.dominance = dominance_ratio(rn);
    });

    EvalRow row;
    row.model_tag = model_tag;
    row.dataset_tag = dataset_tag;
    std::vector<std::size_t> pred(ds.size());
    double drift = 0, dist_sum = 0, dom = std::numeric_limits<double>::infinity();
    std::size_t zeros = 0, counted = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const ImageStats& s = stats[i];
        pred[i] = s.prediction;
        drift = std::max(drift, s.drift);
        dom = std::min(dom, s.dominance);
        if (s.collapsed) {
            ++zeros;
        } else {
            dist_sum += s.distance;
            ++counted;
        }
    }
    row.accuracy = accuracy_from_predictions(pred, ds.labels);
    row.score_drift = drift;
    if (counted) row.heatmap_dist = dist_sum / static_cast<double>(counted);
    row.zero_heatmap_fraction = static_cast<double>(zeros) / static_cast<double>(ds.size());
    if (measure_dominance) row.dominance_ratio = dom;
    return row;
}

template <typename T>
EvalReport run_table1(const Model<T>& original, const Model<T>& t1, const Model<T>& t2, const Model<T>& t3,
                      const LabeledDataset& ds) {
    const std::string tag = split_name(ds.split);
    EvalReport rep;
    rep.rows.push_back(evaluate_original(original, ds, tag));
    rep.rows.push_back(evaluate_attack(original, t1, ds, "T1", tag, TargetKind::AllOnes));
    rep.rows.push_back(evaluate_attack(original, t2, ds, "T2", tag, TargetKind::FixedImage));
    rep.rows.push_back(evaluate_attack(original, t3, ds, "T3", tag, TargetKind::BranchMap));
    return rep;
}

template <typename T>
EvalReport run_table2(const Model<T>& original, const Model<T>& t4, const LabeledDataset& clean,
                      const LabeledDataset& stickered) {
    EvalReport rep;
    const std::string tag = split_name(clean.split);
    rep.rows.push_back(evaluate_original(original, clean, tag));
    // The trigger channel is silent on clean data, so dominance is only
    // meaningful on the stickered rows.
    rep.rows.push_back(evaluate_attack(original, t4, clean, "T4", tag, TargetKind::OriginalHeatmap, false));
    rep.rows.push_back(evaluate_original(original, stickered, "sticker"));
    rep.rows.push_back(evaluate_attack(original, t4, stickered, "T4", "sticker", TargetKind::BranchMap));
    return rep;
}

template <typename T>
EvalReport run_report(const Model<T>& original, const std::vector<const Model<T>*>& attacked,
                      const LabeledDataset& clean, const LabeledDataset* stickered) {
    const std::string tag = split_name(clean.split);
    EvalReport rep;
    rep.rows.push_back(evaluate_original(original, clean, tag));
    for (const Model<T>* m : attacked) {
        if (!m->attack) throw InvalidArgument("attacked model carries no attack record");
        switch (m->attack->technique) {
            case Technique::T1:
                rep.rows.push_back(evaluate_attack(original, *m, clean, "T1", tag, TargetKind::AllOnes));
                break;
            case Technique::T2:
                rep.rows.push_back(evaluate_attack(original, *m, clean, "T2", tag, TargetKind::FixedImage));
                break;
            case Technique::T3:
                rep.rows.push_back(evaluate_attack(original, *m, clean, "T3", tag, TargetKind::BranchMap));
                break;
            case Technique::T4:
                rep.rows.push_back(
                    evaluate_attack(original, *m, clean, "T4", tag, TargetKind::OriginalHeatmap, false));
                break;
        }
    }
    if (stickered) {
        rep.rows.push_back(evaluate_original(original, *stickered, "sticker"));
        for (const Model<T>* m : attacked) {
            const Technique t = m->attack->technique;
            const TargetKind kind = t == Technique::T1   ? TargetKind::AllOnes
                                    : t == Technique::T2 ? TargetKind::FixedImage
                                                         : TargetKind::BranchMap;
            rep.rows.push_back(evaluate_attack(original, *m, *stickered, technique_name(t), "sticker", kind));
        }
    }
    return rep;
}

std::vector<std::string> score_bound_violations(const EvalReport& report, const std::vector<AttackRecord>& attacks) {
    std::vector<std::string> out;
    for (const auto& row : report.rows) {
        if (!row.score_drift) continue;
        for (const auto& a : attacks) {
            if (row.model_tag != technique_name(a.technique)) continue;
            const bool exact = a.technique == Technique::T1 || a.technique == Technique::T2;
            const double bound = exact ? 0.0 : a.config.epsilon;
            if (*row.score_drift > bound)
                out.push_back(row.model_tag + " on " + row.dataset_tag + ": score drift " +
                              format_number(*row.score_drift) + " exceeds " + format_number(bound));
        }
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

double parse_number(const std::string& s) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in CSV");
    return v;
}

std::optional<double> parse_cell(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return parse_number(s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string report_to_csv(const EvalReport& report) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : report.rows)
        out += r.model_tag + "," + r.dataset_tag + "," + format_number(r.accuracy) + "," + cell(r.score_drift) + "," +
               cell(r.heatmap_dist) + "," + format_number(r.zero_heatmap_fraction) + "," + cell(r.dominance_ratio) +
               "\n";
    return out;
}

EvalReport report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kCsvHeader))
        throw FormatError("CSV report lacks the expected header");
    EvalReport rep;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw FormatError("CSV row has " + std::to_string(f.size()) + " fields, expected 7");
        rep.rows.push_back({f[0], f[1], parse_number(f[2]), parse_cell(f[3]), parse_cell(f[4]), parse_number(f[5]),
                            parse_cell(f[6])});
    }
    return rep;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << report_to_csv(report);
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string render_report_table(const EvalReport& report) {
    auto fixed = [](const std::optional<double>& v) -> std::string {
        if (!v) return "-";
        if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
        char buf[64];
        std::snprintf(buf, sizeof buf, std::abs(*v) >= 1e6 ? "%.3e" : "%.5f", *v);
        return buf;
    };
    char line[256];
    std::string out;
    std::snprintf(line, sizeof line, "%-10s %-8s %10s %14s %14s %10s %12s\n", "network", "dataset", "accuracy",
                  "|y_o-y_n|inf", "|I_T-I_n|1", "zero-frac", "dominance");
    out += line;
    out += std::string(84, '-') + "\n";
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof line, "%-10s %-8s %10s %14s %14s %10s %12s\n", r.model_tag.c_str(),
                      r.dataset_tag.c_str(), fixed(r.accuracy).c_str(), fixed(r.score_drift).c_str(),
                      fixed(r.heatmap_dist).c_str(), fixed(r.zero_heatmap_fraction).c_str(),
                      fixed(r.dominance_ratio).c_str());
        out += line;
    }
    return out;
}

#define GCAM_INSTANTIATE(T)                                                                                       \
    template double accuracy<T>(const Model<T>&, const LabeledDataset&);                                          \
    template double score_drift<T>(const Model<T>&, const Model<T>&, const LabeledDataset&);                      \
    template double heatmap_distance<T>(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template double dominance_ratio<T>(const GradCamResult<T>&);                                                  \
    template EvalRow evaluate_original<T>(const Model<T>&, const LabeledDataset&, const std::string&);            \
    template EvalRow evaluate_attack<T>(const Model<T>&, const Model<T>&, const LabeledDataset&,                  \
                                        const std::string&, const std::string&, TargetKind, bool);                \
    template EvalReport run_table1<T>(const Model<T>&, const Model<T>&, const Model<T>&, const Model<T>&,         \
                                      const LabeledDataset&);                                                     \
    template EvalReport run_table2<T>(const Model<T>&, const Model<T>&, const LabeledDataset&, const LabeledDataset&); \
    template EvalReport run_report<T>(const Model<T>&, const std::vector<const Model<T>*>&, const LabeledDataset&, \
                                      const LabeledDataset*);

GCAM_INSTANTIATE(float)
GCAM_INSTANTIATE(double)
#undef GCAM_INSTANTIATE

}  // namespace gcam
