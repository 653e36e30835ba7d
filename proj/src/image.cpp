#include "collabevo/image.hpp"

#include "collabevo/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace collabevo {

ImageBuffer::ImageBuffer(int width, int height, float fill) : width_(width), height_(height)
{
    if (width <= 0 || height <= 0)
        throw InvalidArgument("image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * height * kImageChannels, fill);
}

bool ImageBuffer::values_in_range() const noexcept
{
    return std::all_of(pixels_.begin(), pixels_.end(), [](float v) { return v >= -1.0f && v <= 1.0f; });
}

ImageBuffer upsample(const ImageBuffer& img, int factor)
{
    if (factor < 1)
        throw InvalidArgument("upsample factor must be >= 1, got " + std::to_string(factor));
    if (factor == 1)
        return img;
    ImageBuffer out(img.width() * factor, img.height() * factor);
    const auto src = img.pixels();
    auto dst = out.pixels();
    const std::size_t src_row = static_cast<std::size_t>(img.width()) * kImageChannels;
    const std::size_t dst_row = src_row * factor;
    for (int y = 0; y < img.height(); ++y) {
        float* row = dst.data() + static_cast<std::size_t>(y) * factor * dst_row;
        const float* in = src.data() + y * src_row;
        for (int x = 0; x < img.width(); ++x)
            for (int r = 0; r < factor; ++r)
                std::copy_n(in + x * kImageChannels, kImageChannels,
                            row + (static_cast<std::size_t>(x) * factor + r) * kImageChannels);
        for (int r = 1; r < factor; ++r)
            std::copy_n(row, dst_row, row + r * dst_row);
    }
    return out;
}

std::uint8_t to_byte(float value)
{
    const double scaled = std::floor((static_cast<double>(value) + 1.0) * 127.5 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Rgb8Image quantize(const ImageBuffer& img)
{
    Rgb8Image out{img.width(), img.height(), {}};
    out.bytes.reserve(img.pixels().size());
    for (float v : img.pixels())
        out.bytes.push_back(to_byte(v));
    return out;
}

std::vector<std::uint8_t> to_png_bytes(const ImageBuffer& img)
{
    return encode_png(quantize(img));
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& img)
{
    // OpenCV expects BGR order.
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.bytes.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> png;
    if (!cv::imencode(".png", bgr, png))
        throw Error("PNG encoding failed");
    return png;
}

Rgb8Image decode_png(std::span<const std::uint8_t> png)
{
    cv::Mat raw(1, static_cast<int>(png.size()), CV_8UC1, const_cast<std::uint8_t*>(png.data()));
    cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
    if (bgr.empty())
        throw DataError("not a decodable PNG");
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Rgb8Image out{rgb.cols, rgb.rows, {}};
    out.bytes.assign(rgb.data, rgb.data + rgb.total() * rgb.elemSize());
    return out;
}

ImageBuffer contact_sheet(std::span<const ImageBuffer> images, int columns, int gap, float background)
{
    if (images.empty() || columns < 1)
        throw InvalidArgument("contact sheet needs at least one image and one column");
    const int w = images.front().width();
    const int h = images.front().height();
    const int n = static_cast<int>(images.size());
    const int cols = std::min(columns, n);
    const int rows = (n + cols - 1) / cols;
    ImageBuffer sheet(cols * w + (cols + 1) * gap, rows * h + (rows + 1) * gap, background);
    for (int i = 0; i < n; ++i) {
        const auto& img = images[static_cast<std::size_t>(i)];
        if (img.width() != w || img.height() != h)
            throw InvalidArgument("contact sheet images must share dimensions");
        const int ox = gap + (i % cols) * (w + gap);
        const int oy = gap + (i / cols) * (h + gap);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < kImageChannels; ++c)
                    sheet.at(ox + x, oy + y, c) = img.at(x, y, c);
    }
    return sheet;
}

} // namespace collabevo
