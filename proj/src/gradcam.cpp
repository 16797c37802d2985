#include "gcam/gradcam.hpp"

#include <string>

namespace gcam {

template <typename T>
bool GradCamResult<T>::collapsed() const {
    for (T v : heatmap_raw.data())
        if (v != T(0)) return false;
    return true;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
    if (values.empty()) throw DimensionError("scores", "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

template <typename T>
std::vector<T> pool_gradient(const BasicTensor<T>& grad) {
    if (grad.rank() != 3) throw DimensionError("rank", "gradient must be CxHxW");
    const std::size_t n = grad.dim(1) * grad.dim(2);
    std::vector<T> alphas(grad.dim(0));
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        T sum = 0;
        for (T v : grad.channel(k)) sum += v;
        alphas[k] = sum / static_cast<T>(n);
    }
    return alphas;
}

template <typename T>
std::vector<T> compute_alphas(const Model<T>& model, const BasicTensor<T>& x, std::size_t class_index) {
    return pool_gradient(grad_scores_wrt_A(model, x, class_index));
}

template <typename T>
BasicTensor<T> normalize_heatmap(const BasicTensor<T>& raw) {
    T peak = 0;
    for (T v : raw.data())
        if (v > peak) peak = v;
    BasicTensor<T> out(raw.shape());
    if (peak > T(0))
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / peak;
    return out;
}

template <typename T>
GradCamResult<T> compute_heatmap(std::span<const T> alphas, const BasicTensor<T>& A) {
    if (A.rank() != 3) throw DimensionError("rank", "featuremaps must be CxHxW");
    if (alphas.size() != A.dim(0))
        throw DimensionError("channels", std::to_string(alphas.size()) + " weights for " + std::to_string(A.dim(0)) +
                                             " featuremaps");
    GradCamResult<T> r;
    r.alphas.assign(alphas.begin(), alphas.end());
    r.heatmap_raw = BasicTensor<T>({A.dim(1), A.dim(2)});
    auto out = r.heatmap_raw.data();
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        const T a = alphas[k];
        const auto ch = A.channel(k);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * ch[i];
    }
    for (auto& v : out) v = v > T(0) ? v : T(0);
    r.heatmap_norm = normalize_heatmap(r.heatmap_raw);
    r.A = A;
    return r;
}

template <typename T>
GradCamResult<T> explain(const Model<T>& model, const BasicTensor<T>& x, std::optional<std::size_t> class_index) {
    const ForwardResult<T> fw = forward_full(model, x);
    const std::size_t c = class_index ? *class_index : argmax<T>(fw.y.data());
    if (c >= fw.y.size())
        throw DimensionError("class", "class index " + std::to_string(c) + " out of range for " +
                                          std::to_string(fw.y.size()) + " classes");
    const std::vector<T> alphas = pool_gradient(grad_scores_from_A(model, fw.A, c));
    GradCamResult<T> r = compute_heatmap<T>(alphas, fw.A);
    r.class_index = c;
    r.scores = fw.y;
    return r;
}

#define GCAM_INSTANTIATE(T)                                                                              \
    template struct GradCamResult<T>;                                                                    \
    template std::size_t argmax<T>(std::span<const T>);                                                  \
    template std::vector<T> pool_gradient<T>(const BasicTensor<T>&);                                     \
    template std::vector<T> compute_alphas<T>(const Model<T>&, const BasicTensor<T>&, std::size_t);      \
    template BasicTensor<T> normalize_heatmap<T>(const BasicTensor<T>&);                                 \
    template GradCamResult<T> compute_heatmap<T>(std::span<const T>, const BasicTensor<T>&);             \
    template GradCamResult<T> explain<T>(const Model<T>&, const BasicTensor<T>&, std::optional<std::size_t>);

GCAM_INSTANTIATE(float)
GCAM_INSTANTIATE(double)
#undef GCAM_INSTANTIATE

}  // namespace gcam
