#include "collabevo/generator.hpp"

#include "collabevo/errors.hpp"

#include <Eigen/Dense>
#include <opencv2/dnn.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace collabevo {

namespace {

void require_latent_dim(const LatentVector& z)
{
    if (z.size() != kLatentDim)
        throw InvalidArgument("generator expects " + std::to_string(kLatentDim) + " genes, got " +
                              std::to_string(z.size()));
}

} // namespace

ImageBuffer ProceduralGenerator::generate(const LatentVector& z) const
{
    require_latent_dim(z);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    constexpr int terms = static_cast<int>(kTerms);
    constexpr int w = kImageWidth;
    constexpr int h = kImageHeight;

    // sin(A + B) = sin A cos B + cos A sin B separates the phase into a
    // column part A(x, k) and a row part B(y), so each channel is a rank-40
    // product rows(h x 40) * cols(40 x w). Trig runs in double, the product
    // and tanh in float.
    using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::MatrixXf rows(h, 2 * terms);
    for (int i = 0; i < terms; ++i) {
        const double fy = z[5 * i + 2];
        for (int y = 0; y < h; ++y) {
            const double b = two_pi * fy * (static_cast<double>(y) / (h - 1));
            rows(y, 2 * i) = static_cast<float>(std::cos(b));
            rows(y, 2 * i + 1) = static_cast<float>(std::sin(b));
        }
    }

    ImageBuffer img(w, h);
    Eigen::MatrixXf cols(2 * terms, w);
    RowMajor sum(h, w);
    auto pixels = img.pixels();
    for (int k = 0; k < kImageChannels; ++k) {
        for (int i = 0; i < terms; ++i) {
            const double amp = z[5 * i] / static_cast<double>(terms);
            const double fx = z[5 * i + 1];
            const double shift = z[5 * i + 3] + k * z[5 * i + 4];
            for (int x = 0; x < w; ++x) {
                const double a = two_pi * fx * (static_cast<double>(x) / (w - 1)) + shift;
                cols(2 * i, x) = static_cast<float>(amp * std::sin(a));
                cols(2 * i + 1, x) = static_cast<float>(amp * std::cos(a));
            }
        }
        sum.noalias() = rows * cols;
        sum = sum.array().tanh().min(1.0f).max(-1.0f).matrix();
        const float* src = sum.data();
        for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p)
            pixels[p * kImageChannels + k] = src[p];
    }
    return img;
}

double procedural_lipschitz_bound(const LatentVector& z, double radius)
{
    require_latent_dim(z);
    double max_amp = 0.0;
    for (std::size_t i = 0; i < ProceduralGenerator::kTerms; ++i)
        max_amp = std::max(max_amp, std::abs(z[5 * i]));
    const double frequency_bound = 2.0 * std::numbers::pi * (max_amp + radius);
    return std::max(1.0, frequency_bound) / static_cast<double>(ProceduralGenerator::kTerms);
}

struct ModelGenerator::Impl
{
    cv::dnn::Net net;
    std::mutex mutex;

    cv::Mat infer(const LatentVector& z)
    {
        cv::Mat input(1, static_cast<int>(kLatentDim), CV_32F);
        for (std::size_t i = 0; i < kLatentDim; ++i)
            input.at<float>(0, static_cast<int>(i)) = static_cast<float>(z[i]);
        std::lock_guard lock(mutex);
        net.setInput(input, "z");
        return net.forward("image").clone();
    }
};

ModelGenerator::ModelGenerator(const std::filesystem::path& model_path)
    : path_(model_path), impl_(std::make_unique<Impl>())
{
    if (!std::filesystem::exists(model_path))
        throw BackendError("generator model not found: " + model_path.string());
    try {
        impl_->net = cv::dnn::readNetFromONNX(model_path.string());
        const cv::Mat probe = impl_->infer(LatentVector::zeros());
        if (probe.dims != 4 || probe.size[0] != 1 || probe.size[1] != kImageChannels ||
            probe.size[2] != kImageHeight || probe.size[3] != kImageWidth)
            throw BackendError("generator model " + model_path.string() +
                               " does not produce float[batch,3,144,256] from input z");
    } catch (const cv::Exception& e) {
        throw BackendError("generator model " + model_path.string() + ": " + e.what());
    }
}

ModelGenerator::~ModelGenerator() = default;

ImageBuffer ModelGenerator::generate(const LatentVector& z) const
{
    require_latent_dim(z);
    cv::Mat out;
    try {
        out = impl_->infer(z);
    } catch (const cv::Exception& e) {
        throw BackendError(std::string("generator inference failed: ") + e.what());
    }
    ImageBuffer img;
    const float* data = out.ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(kImageWidth) * kImageHeight;
    for (int c = 0; c < kImageChannels; ++c)
        for (int y = 0; y < kImageHeight; ++y)
            for (int x = 0; x < kImageWidth; ++x) {
                const float v = data[c * plane + static_cast<std::size_t>(y) * kImageWidth + x];
                if (!std::isfinite(v))
                    throw BackendError("generator produced a non-finite pixel");
                img.at(x, y, c) = std::clamp(v, -1.0f, 1.0f);
            }
    return img;
}

GeneratorBackend GeneratorBackend::parse(const std::string& text)
{
    if (text == "procedural")
        return {};
    constexpr std::string_view prefix = "model:";
    if (text.starts_with(prefix) && text.size() > prefix.size())
        return {Kind::model, std::filesystem::path(text.substr(prefix.size()))};
    throw ConfigError("generator", "expected 'procedural' or 'model:PATH', got '" + text + "'");
}

std::string GeneratorBackend::to_string() const
{
    return kind == Kind::procedural ? "procedural" : "model:" + model_path->string();
}

std::unique_ptr<Generator> make_generator(const GeneratorBackend& backend)
{
    if (backend.kind == GeneratorBackend::Kind::procedural)
        return std::make_unique<ProceduralGenerator>();
    return std::make_unique<ModelGenerator>(*backend.model_path);
}

std::shared_ptr<const ImageBuffer> PhenotypeCache::get(const Individual& individual)
{
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(individual.id);
        if (it != entries_.end() && it->second.genotype == individual.genotype)
            return it->second.image;
    }
    auto image = std::make_shared<const ImageBuffer>(generator_->generate(individual.genotype));
    std::lock_guard lock(mutex_);
    entries_[individual.id] = Entry{individual.genotype, image};
    return image;
}

void PhenotypeCache::clear()
{
    std::lock_guard lock(mutex_);
    entries_.clear();
}

std::size_t PhenotypeCache::size() const
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

} // namespace collabevo
