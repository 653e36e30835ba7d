#include "collabevo/scoring.hpp"

#include "collabevo/serialization.hpp"

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

namespace collabevo {

// --- synthetic ---------------------------------------------------------------

SyntheticScorer::SyntheticScorer() : target_(default_target()) {}

SyntheticScorer::SyntheticScorer(ImageBuffer target) : target_(std::move(target))
{
    if (!target_.has_phenotype_shape() || !target_.values_in_range())
        throw InvalidArgument("synthetic target must be a 256x144 image in [-1, 1]");
}

ImageBuffer SyntheticScorer::default_target()
{
    ImageBuffer target;
    for (int y = 0; y < kImageHeight; ++y) {
        const float v = static_cast<float>(-1.0 + 2.0 * y / (kImageHeight - 1));
        for (int x = 0; x < kImageWidth; ++x)
            for (int c = 0; c < kImageChannels; ++c)
                target.at(x, y, c) = v;
    }
    return target;
}

double SyntheticScorer::score(const ImageBuffer& img) const
{
    if (!img.has_phenotype_shape())
        throw InvalidArgument("synthetic scorer expects a 256x144 image");
    const auto p = img.pixels();
    const auto t = target_.pixels();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        sum += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
    const double g = 1.0 - sum / static_cast<double>(p.size()) / 2.0;
    return std::clamp(1.0 + 9.0 * g, kMinFitness, kMaxFitness);
}

// --- model ---------------------------------------------------------------------

double distribution_mean(std::span<const float> probabilities)
{
    if (probabilities.size() != 10)
        throw DataError("score distribution must have 10 buckets, got " + std::to_string(probabilities.size()));
    double total = 0.0;
    for (float p : probabilities) {
        if (!std::isfinite(p) || p < 0.0f)
            throw DataError("score distribution contains a negative or non-finite bucket");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-3)
        throw DataError("score distribution sums to " + std::to_string(total) + ", not 1");
    double mean = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i)
        mean += static_cast<double>(i + 1) * probabilities[i];
    return std::clamp(mean / total, kMinFitness, kMaxFitness);
}

std::filesystem::path ScorerManifest::sidecar_for(const std::filesystem::path& model_path)
{
    auto p = model_path;
    p.replace_extension(".json");
    return p;
}

ScorerManifest ScorerManifest::load(const std::filesystem::path& path)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const Error& e) {
        throw BackendError(std::string("scorer manifest: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("scorer manifest " + path.string() + ": " + e.what());
    }
    ScorerManifest m;
    try {
        m.input_width = doc.at("input_width").get<int>();
        m.input_height = doc.at("input_height").get<int>();
        const auto range = doc.value("range", std::string("zero_one"));
        if (range == "minus_one_one")
            m.range = Range::minus_one_one;
        else if (range == "zero_one")
            m.range = Range::zero_one;
        else if (range == "zero_255")
            m.range = Range::zero_255;
        else
            throw BackendError("scorer manifest: unknown range '" + range + "'");
        if (doc.contains("mean"))
            m.mean = doc.at("mean").get<std::array<float, 3>>();
        if (doc.contains("std"))
            m.std = doc.at("std").get<std::array<float, 3>>();
        m.bgr = doc.value("channel_order", std::string("rgb")) == "bgr";
        m.input_name = doc.value("input_name", std::string());
        m.output_name = doc.value("output_name", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("scorer manifest " + path.string() + ": " + e.what());
    }
    if (m.input_width <= 0 || m.input_height <= 0)
        throw BackendError("scorer manifest: input dimensions must be positive");
    for (float s : m.std)
        if (!(s > 0.0f))
            throw BackendError("scorer manifest: std entries must be positive");
    return m;
}

struct ModelScorer::Impl
{
    cv::dnn::Net net;
    ScorerManifest manifest;
    std::mutex mutex;

    cv::Mat preprocess(const ImageBuffer& img) const
    {
        cv::Mat src(img.height(), img.width(), CV_32FC3, const_cast<float*>(img.pixels().data()));
        cv::Mat resized;
        cv::resize(src, resized, cv::Size(manifest.input_width, manifest.input_height), 0, 0, cv::INTER_LINEAR);
        const int dims[] = {1, 3, manifest.input_height, manifest.input_width};
        cv::Mat blob(4, dims, CV_32F);
        float* out = blob.ptr<float>();
        const std::size_t plane = static_cast<std::size_t>(manifest.input_width) * manifest.input_height;
        for (int c = 0; c < 3; ++c) {
            const int src_c = manifest.bgr ? 2 - c : c;
            for (int y = 0; y < manifest.input_height; ++y)
                for (int x = 0; x < manifest.input_width; ++x) {
                    float v = resized.at<cv::Vec3f>(y, x)[src_c];
                    switch (manifest.range) {
                    case ScorerManifest::Range::minus_one_one: break;
                    case ScorerManifest::Range::zero_one: v = (v + 1.0f) * 0.5f; break;
                    case ScorerManifest::Range::zero_255: v = (v + 1.0f) * 127.5f; break;
                    }
                    out[c * plane + static_cast<std::size_t>(y) * manifest.input_width + x] =
                        (v - manifest.mean[c]) / manifest.std[c];
                }
        }
        return blob;
    }

    std::array<float, 10> infer(const ImageBuffer& img)
    {
        const cv::Mat blob = preprocess(img);
        cv::Mat out;
        {
            std::lock_guard lock(mutex);
            net.setInput(blob, manifest.input_name);
            out = manifest.output_name.empty() ? net.forward() : net.forward(manifest.output_name);
        }
        if (out.total() != 10)
            throw BackendError("scorer model output has " + std::to_string(out.total()) + " values, expected 10");
        std::array<float, 10> probs{};
        std::copy_n(out.ptr<float>(), 10, probs.begin());
        return probs;
    }
};

ModelScorer::ModelScorer(const std::filesystem::path& model_path)
    : path_(model_path), impl_(std::make_unique<Impl>())
{
    if (!std::filesystem::exists(model_path))
        throw BackendError("scorer model not found: " + model_path.string());
    const auto sidecar = ScorerManifest::sidecar_for(model_path);
    if (!std::filesystem::exists(sidecar))
        throw BackendError("scorer manifest not found: " + sidecar.string());
    impl_->manifest = ScorerManifest::load(sidecar);
    try {
        impl_->net = cv::dnn::readNetFromONNX(model_path.string());
        impl_->infer(ImageBuffer());
    } catch (const cv::Exception& e) {
        throw BackendError("scorer model " + model_path.string() + ": " + e.what());
    }
}

ModelScorer::~ModelScorer() = default;

std::array<float, 10> ModelScorer::distribution(const ImageBuffer& img) const
{
    try {
        return impl_->infer(img);
    } catch (const cv::Exception& e) {
        throw BackendError(std::string("scorer inference failed: ") + e.what());
    }
}

double ModelScorer::score(const ImageBuffer& img) const
{
    const auto probs = distribution(img);
    return distribution_mean(probs);
}

ScorerBackend ScorerBackend::parse(const std::string& text)
{
    if (text == "synthetic")
        return {};
    constexpr std::string_view prefix = "model:";
    if (text.starts_with(prefix) && text.size() > prefix.size())
        return {Kind::model, std::filesystem::path(text.substr(prefix.size()))};
    throw ConfigError("scorer", "expected 'synthetic' or 'model:PATH', got '" + text + "'");
}

std::string ScorerBackend::to_string() const
{
    return kind == Kind::synthetic ? "synthetic" : "model:" + model_path->string();
}

std::unique_ptr<AutomaticScorer> make_scorer(const ScorerBackend& backend)
{
    if (backend.kind == ScorerBackend::Kind::synthetic)
        return std::make_unique<SyntheticScorer>();
    return std::make_unique<ModelScorer>(*backend.model_path);
}

// --- collaborative -------------------------------------------------------------

std::string_view to_string(BallotError::Code code)
{
    using C = BallotError::Code;
    switch (code) {
    case C::unknown_participant: return "unknown_participant";
    case C::duplicate_ballot: return "duplicate_ballot";
    case C::missing_ballot: return "missing_ballot";
    case C::rating_out_of_range: return "rating_out_of_range";
    case C::incomplete_ratings: return "incomplete_ratings";
    case C::unknown_image: return "unknown_image";
    case C::wrong_generation: return "wrong_generation";
    }
    return "unknown";
}

void validate_ballot(const RatingBallot& ballot, std::uint32_t generation, std::span<const std::string> image_ids)
{
    using C = BallotError::Code;
    const auto& who = ballot.participant_id;
    if (ballot.generation != generation)
        throw BallotError(C::wrong_generation,
                          "ballot for generation " + std::to_string(ballot.generation) + ", current is " +
                              std::to_string(generation),
                          who);
    const std::set<std::string> expected(image_ids.begin(), image_ids.end());
    for (const auto& [image, rating] : ballot.ratings) {
        if (!expected.contains(image))
            throw BallotError(C::unknown_image, "image '" + image + "' is not part of generation " +
                                                     std::to_string(generation), who, image);
        if (rating < kMinRating || rating > kMaxRating)
            throw BallotError(C::rating_out_of_range,
                              "rating " + std::to_string(rating) + " for image '" + image + "' outside 1..10", who,
                              image);
    }
    for (const auto& image : image_ids)
        if (!ballot.ratings.contains(image))
            throw BallotError(C::incomplete_ratings, "no rating for image '" + image + "'", who, image);
}

std::map<std::string, FitnessRecord> aggregate_ratings(std::span<const RatingBallot> ballots,
                                                       std::uint32_t generation,
                                                       std::span<const std::string> roster,
                                                       std::span<const std::string> image_ids)
{
    using C = BallotError::Code;
    std::map<std::string, const RatingBallot*> by_participant;
    const std::set<std::string> members(roster.begin(), roster.end());
    for (const auto& ballot : ballots) {
        if (!members.contains(ballot.participant_id))
            throw BallotError(C::unknown_participant, "participant '" + ballot.participant_id + "' not in roster",
                              ballot.participant_id);
        validate_ballot(ballot, generation, image_ids);
        if (!by_participant.emplace(ballot.participant_id, &ballot).second)
            throw BallotError(C::duplicate_ballot, "participant '" + ballot.participant_id + "' submitted twice",
                              ballot.participant_id);
    }
    for (const auto& member : roster)
        if (!by_participant.contains(member))
            throw BallotError(C::missing_ballot, "no ballot from participant '" + member + "'", member);

    std::map<std::string, FitnessRecord> records;
    for (const auto& image : image_ids) {
        FitnessRecord rec;
        rec.image_id = image;
        for (const auto& member : roster)
            rec.per_participant.push_back(by_participant.at(member)->ratings.at(image));
        const auto n = static_cast<double>(rec.per_participant.size());
        double sum = 0.0;
        for (int r : rec.per_participant)
            sum += r;
        rec.mean = sum / n;
        double ss = 0.0;
        for (int r : rec.per_participant)
            ss += (r - rec.mean) * (r - rec.mean);
        rec.sd = std::sqrt(ss / n);
        const auto [lo, hi] = std::minmax_element(rec.per_participant.begin(), rec.per_participant.end());
        rec.min = *lo;
        rec.max = *hi;
        records.emplace(image, std::move(rec));
    }
    return records;
}

} // namespace collabevo
