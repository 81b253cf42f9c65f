#include "spatialgen/nn.hpp"

#include <cmath>
#include <vector>

namespace spatialgen::nn {

Mat<double> attention_reference(const Mat<double>& q, const Mat<double>& k, const Mat<double>& v, const Groups& groups,
                                int heads) {
    const int d = static_cast<int>(q.cols());
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat<double> out = Mat<double>::Zero(q.rows(), d);
    for (const auto& group : groups) {
        for (int h = 0; h < heads; ++h) {
            for (int i : group) {
                std::vector<double> logits;
                double peak = -1e300;
                for (int j : group) {
                    double dot = 0.0;
                    for (int c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
                    logits.push_back(dot * scale);
                    peak = std::max(peak, logits.back());
                }
                double total = 0.0;
                for (double& l : logits) total += (l = std::exp(l - peak));
                for (std::size_t n = 0; n < group.size(); ++n) {
                    for (int c = 0; c < dh; ++c) out(i, h * dh + c) += logits[n] / total * v(group[n], h * dh + c);
                }
            }
        }
    }
    return out;
}

}  // namespace spatialgen::nn
