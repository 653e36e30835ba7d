#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace collabevo {

inline constexpr int kImageWidth = 256;
inline constexpr int kImageHeight = 144;
inline constexpr int kImageChannels = 3;
inline constexpr int kDisplayUpsample = 8;

/// RGB image, row-major with interleaved channels, values nominally in [-1, 1].
///
/// Phenotypes are exactly 256x144; upsampled display copies use the same type.
class ImageBuffer
{
public:
    ImageBuffer() : ImageBuffer(kImageWidth, kImageHeight) {}
    ImageBuffer(int width, int height, float fill = 0.0f);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    float& at(int x, int y, int channel) { return pixels_[offset(x, y, channel)]; }
    float at(int x, int y, int channel) const { return pixels_[offset(x, y, channel)]; }

    std::span<float> pixels() noexcept { return pixels_; }
    std::span<const float> pixels() const noexcept { return pixels_; }

    bool has_phenotype_shape() const noexcept { return width_ == kImageWidth && height_ == kImageHeight; }
    bool values_in_range() const noexcept;

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t offset(int x, int y, int channel) const
    {
        return (static_cast<std::size_t>(y) * width_ + x) * kImageChannels + channel;
    }

    int width_;
    int height_;
    std::vector<float> pixels_;
};

/// Nearest-neighbour replication by an integer factor (>= 1).
ImageBuffer upsample(const ImageBuffer& img, int factor);

/// Linear [-1, 1] -> [0, 255] map with round-half-up; values outside the range saturate.
std::uint8_t to_byte(float value);

struct Rgb8Image
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bytes; // row-major RGB

    friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

Rgb8Image quantize(const ImageBuffer& img);

/// RGB PNG (no alpha) of the quantized image.
std::vector<std::uint8_t> to_png_bytes(const ImageBuffer& img);
std::vector<std::uint8_t> encode_png(const Rgb8Image& img);
/// Decodes an RGB PNG; throws DataError on malformed input.
Rgb8Image decode_png(std::span<const std::uint8_t> png);

/// Tiles equally sized images row by row, `columns` per row, separated by `gap` pixels of `background`.
ImageBuffer contact_sheet(std::span<const ImageBuffer> images, int columns, int gap = 4, float background = 1.0f);

} // namespace collabevo
