#pragma once

#include "collabevo/errors.hpp"
#include "collabevo/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace collabevo {

/// Fitness backend that needs no human input. Every implementation returns a value in [1, 10].
class AutomaticScorer
{
public:
    virtual ~AutomaticScorer() = default;
    virtual double score(const ImageBuffer& img) const = 0;
    virtual std::string describe() const = 0;
};

/// Analytic target-matching scorer: 1 + 9 * (1 - mean|p - target| / 2).
class SyntheticScorer final : public AutomaticScorer
{
public:
    /// Uses `default_target()`.
    SyntheticScorer();
    /// Target must be a 256x144 image in [-1, 1].
    explicit SyntheticScorer(ImageBuffer target);

    /// Vertical gradient: -1 on the top row to +1 on the bottom row, equal across channels.
    static ImageBuffer default_target();

    double score(const ImageBuffer& img) const override;
    std::string describe() const override { return "synthetic"; }

    const ImageBuffer& target() const noexcept { return target_; }

private:
    ImageBuffer target_;
};

/// Mean score of a 10-bucket distribution, sum_i i * p_i for i = 1..10.
///
/// A distribution whose total is within 1e-3 of 1 is renormalized; anything
/// further off, negative or non-finite raises DataError.
double distribution_mean(std::span<const float> probabilities);

/// Input preprocessing declared next to a scorer model (`<model>.json`).
struct ScorerManifest
{
    enum class Range { minus_one_one, zero_one, zero_255 };

    int input_width = 224;
    int input_height = 224;
    Range range = Range::zero_one;
    std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> std{1.0f, 1.0f, 1.0f};
    bool bgr = false;
    std::string input_name;
    std::string output_name;

    static ScorerManifest load(const std::filesystem::path& path);
    static std::filesystem::path sidecar_for(const std::filesystem::path& model_path);
};

/// NIMA-style aesthetic model in ONNX format: image float[batch,3,H,W] -> float[batch,10].
class ModelScorer final : public AutomaticScorer
{
public:
    /// Reads the model and its sidecar manifest; throws BackendError if either is unusable.
    explicit ModelScorer(const std::filesystem::path& model_path);
    ~ModelScorer() override;

    double score(const ImageBuffer& img) const override;
    std::string describe() const override { return "model:" + path_.string(); }

    /// Raw 10-bucket output for an image.
    std::array<float, 10> distribution(const ImageBuffer& img) const;

private:
    struct Impl;
    std::filesystem::path path_;
    std::unique_ptr<Impl> impl_;
};

struct ScorerBackend
{
    enum class Kind { synthetic, model };

    Kind kind = Kind::synthetic;
    std::optional<std::filesystem::path> model_path;

    /// Parses "synthetic" or "model:PATH".
    static ScorerBackend parse(const std::string& text);
    std::string to_string() const;
};

std::unique_ptr<AutomaticScorer> make_scorer(const ScorerBackend& backend);

// --- collaborative ratings -------------------------------------------------

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 10;

struct RatingBallot
{
    std::string participant_id;
    std::uint32_t generation = 0;
    std::map<std::string, int> ratings; // image id -> rating

    friend bool operator==(const RatingBallot&, const RatingBallot&) = default;
};

struct FitnessRecord
{
    std::string image_id;
    std::vector<int> per_participant; // roster order
    double mean = 0.0;
    double sd = 0.0; // population SD
    int min = 0;
    int max = 0;

    friend bool operator==(const FitnessRecord&, const FitnessRecord&) = default;
};

/// Rejected ballot or aggregation. `participant_id()` / `image_id()` identify the offender when known.
class BallotError : public DataError
{
public:
    enum class Code {
        unknown_participant,
        duplicate_ballot,
        missing_ballot,
        rating_out_of_range,
        incomplete_ratings,
        unknown_image,
        wrong_generation,
    };

    BallotError(Code code, const std::string& message, std::string participant_id = {}, std::string image_id = {})
        : DataError(message), code_(code), participant_id_(std::move(participant_id)), image_id_(std::move(image_id))
    {
    }

    Code code() const noexcept { return code_; }
    const std::string& participant_id() const noexcept { return participant_id_; }
    const std::string& image_id() const noexcept { return image_id_; }

private:
    Code code_;
    std::string participant_id_;
    std::string image_id_;
};

std::string_view to_string(BallotError::Code code);

/// Checks a single ballot against the generation's image ids: full coverage, no
/// extra ids, integer ratings in [1, 10].
void validate_ballot(const RatingBallot& ballot, std::uint32_t generation, std::span<const std::string> image_ids);

/// Per-image mean / population SD / range over exactly one ballot per roster member.
std::map<std::string, FitnessRecord> aggregate_ratings(std::span<const RatingBallot> ballots,
                                                       std::uint32_t generation,
                                                       std::span<const std::string> roster,
                                                       std::span<const std::string> image_ids);

} // namespace collabevo
