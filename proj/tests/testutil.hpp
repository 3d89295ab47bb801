#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fusion/tensor.hpp"

namespace testutil {

// Central finite differences against the analytic gradient, element by
// element, in double precision. make_loss must rebuild the graph from the
// current leaf values. Error metric: |analytic - fd| / max(1, |analytic|, |fd|).
template <typename MakeLoss>
double max_gradcheck_error(MakeLoss make_loss, std::vector<fusion::Tensor<double>> leaves,
                           double h = 1e-5) {
    for (auto& leaf : leaves) leaf.zero_grad();
    fusion::Tensor<double> loss = make_loss();
    fusion::backward(loss);

    std::vector<fusion::Buffer<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    double max_err = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (fusion::Index i = 0; i < leaf.size(); ++i) {
            const double v = leaf.value()[i];
            leaf.value()[i] = v + h;
            const double lp = make_loss().value()[0];
            leaf.value()[i] = v - h;
            const double lm = make_loss().value()[0];
            leaf.value()[i] = v;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = analytic[li][i];
            const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(std::uintptr_t(this)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
