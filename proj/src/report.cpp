#include "collabevo/report.hpp"

#include "collabevo/errors.hpp"
#include "collabevo/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace collabevo {

std::vector<CurvePoint> aggregate_runs(std::span<const std::vector<GenerationRecord>> runs)
{
    if (runs.empty())
        return {};
    const std::size_t length = runs.front().size();
    for (const auto& run : runs)
        if (run.size() != length)
            throw InvalidArgument("aggregate_runs: runs have different lengths");

    std::vector<CurvePoint> curve(length);
    const double n = static_cast<double>(runs.size());
    for (std::size_t g = 0; g < length; ++g) {
        if (runs.size() == 1) {
            curve[g] = {runs.front()[g].mean, runs.front()[g].stderr_mean};
            continue;
        }
        double sum = 0.0;
        for (const auto& run : runs)
            sum += run[g].mean;
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& run : runs)
            ss += (run[g].mean - mean) * (run[g].mean - mean);
        curve[g] = {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
    }
    return curve;
}

std::vector<std::uint8_t> render_fitness_curve_png(std::span<const CurvePoint> curve, const std::string& title,
                                                   int width, int height)
{
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int left = 70, right = 20, top = 40, bottom = 50;
    const int plot_w = width - left - right;
    const int plot_h = height - top - bottom;

    double lo = 10.0, hi = 1.0;
    for (const auto& p : curve) {
        lo = std::min(lo, p.mean - p.stderr_mean);
        hi = std::max(hi, p.mean + p.stderr_mean);
    }
    if (curve.empty() || hi <= lo) {
        lo = 1.0;
        hi = 10.0;
    }
    const double pad = 0.05 * (hi - lo) + 1e-6;
    lo -= pad;
    hi += pad;

    const auto last = std::max<std::size_t>(curve.size(), 2) - 1;
    auto to_px = [&](std::size_t g, double v) {
        const double x = left + plot_w * static_cast<double>(g) / static_cast<double>(last);
        const double y = top + plot_h * (1.0 - (v - lo) / (hi - lo));
        return cv::Point(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
    };

    // Colours are BGR.
    const cv::Scalar axis(40, 40, 40), line(160, 80, 20), band(240, 215, 190);
    if (!curve.empty()) {
        std::vector<cv::Point> poly;
        for (std::size_t g = 0; g < curve.size(); ++g)
            poly.push_back(to_px(g, curve[g].mean + curve[g].stderr_mean));
        for (std::size_t g = curve.size(); g-- > 0;)
            poly.push_back(to_px(g, curve[g].mean - curve[g].stderr_mean));
        cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{poly}, band, cv::LINE_8);
        for (std::size_t g = 1; g < curve.size(); ++g)
            cv::line(canvas, to_px(g - 1, curve[g - 1].mean), to_px(g, curve[g].mean), line, 2, cv::LINE_8);
    }

    cv::line(canvas, {left, top}, {left, top + plot_h}, axis, 1);
    cv::line(canvas, {left, top + plot_h}, {left + plot_w, top + plot_h}, axis, 1);
    char label[32];
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        const int y = top + plot_h - plot_h * t / 4;
        cv::line(canvas, {left - 5, y}, {left, y}, axis, 1);
        std::snprintf(label, sizeof(label), "%.2f", v);
        cv::putText(canvas, label, {5, y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_8);
    }
    const std::size_t step = std::max<std::size_t>(1, (last + 1) / 10);
    for (std::size_t g = 0; g <= last && !curve.empty(); g += step) {
        const auto p = to_px(g, lo);
        cv::line(canvas, {p.x, top + plot_h}, {p.x, top + plot_h + 5}, axis, 1);
        std::snprintf(label, sizeof(label), "%zu", g);
        cv::putText(canvas, label, {p.x - 6, top + plot_h + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
                    cv::LINE_8);
    }
    cv::putText(canvas, "generation", {left + plot_w / 2 - 40, height - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1,
                cv::LINE_8);
    cv::putText(canvas, title, {left, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_8);

    std::vector<std::uint8_t> png;
    if (!cv::imencode(".png", canvas, png))
        throw Error("PNG encoding failed");
    return png;
}

} // namespace collabevo
