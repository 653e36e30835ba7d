#include "collabevo/errors.hpp"
#include "collabevo/generator.hpp"
#include "collabevo/image.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <future>
#include <vector>

using namespace collabevo;

namespace {

const std::filesystem::path kFixtures = COLLABEVO_FIXTURES;

LatentVector reference_latent()
{
    std::vector<double> g(100);
    for (int i = 0; i < 100; ++i)
        g[i] = static_cast<double>((i * 37) % 23 - 11) / 7.0;
    return LatentVector(g);
}

} // namespace

TEST_CASE("byte mapping")
{
    CHECK(to_byte(-1.0f) == 0);
    CHECK(to_byte(0.0f) == 128);
    CHECK(to_byte(1.0f) == 255);
    CHECK(to_byte(-3.0f) == 0);
    CHECK(to_byte(7.0f) == 255);
    for (int b = 0; b < 256; ++b) {
        const float v = static_cast<float>(b) / 127.5f - 1.0f;
        CHECK(to_byte(v) == b);
    }
}

TEST_CASE("png round trip preserves quantized pixels")
{
    ImageBuffer img(5, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = -1.0f + 0.13f * static_cast<float>(x + 2 * y + c);
    const auto png = to_png_bytes(img);
    REQUIRE(png.size() > 8);
    CHECK(png[1] == 'P');
    const auto decoded = decode_png(png);
    CHECK(decoded == quantize(img));
    CHECK(decoded.width == 5);
    CHECK(decoded.height == 3);
    // first pixel, channel order preserved
    CHECK(decoded.bytes[0] == 0);
    CHECK(decoded.bytes[1] == to_byte(-0.87f));
}

TEST_CASE("decoding garbage fails cleanly")
{
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(decode_png(junk), DataError);
}

TEST_CASE("upsample replicates pixels")
{
    ImageBuffer img(2, 1);
    img.at(1, 0, 2) = 0.5f;
    const auto up = upsample(img, 3);
    CHECK(up.width() == 6);
    CHECK(up.height() == 3);
    CHECK(up.at(3, 2, 2) == 0.5f);
    CHECK(up.at(2, 2, 2) == 0.0f);
    CHECK(upsample(img, 1) == img);
    CHECK_THROWS_AS(upsample(img, 0), InvalidArgument);
}

TEST_CASE("contact sheet layout")
{
    std::vector<ImageBuffer> tiles(7, ImageBuffer(4, 2, -1.0f));
    const auto sheet = contact_sheet(tiles, 3, 1, 1.0f);
    // gaps between tiles and around the border
    CHECK(sheet.width() == 3 * 4 + 4);
    CHECK(sheet.height() == 3 * 2 + 4);
    CHECK(sheet.at(0, 0, 0) == 1.0f);
    CHECK(sheet.at(1, 1, 0) == -1.0f);
    CHECK(sheet.at(5, 1, 0) == 1.0f);
    CHECK(sheet.at(14, 7, 0) == 1.0f);
}

TEST_CASE("procedural generator matches the closed form")
{
    const ProceduralGenerator gen;
    const auto img = gen.generate(reference_latent());
    // Evaluated in double precision in an independent script.
    struct Sample
    {
        int x, y;
        double rgb[3];
    };
    const Sample samples[] = {
        {0, 0, {-0.01580583391703603, -0.29084374159536025, -0.4048285254055941}},
        {255, 0, {0.05324501624896716, 0.029451883055833895, 0.04224345150275111}},
        {0, 143, {0.02666416165988515, 0.11560912754304419, 0.157912704352259}},
        {255, 143, {0.13990176503428975, 0.13428478780121475, 0.1085442739517989}},
        {100, 70, {-0.06450756930970912, 0.007782238289629803, -0.03323136167792287}},
        {17, 99, {0.22171860625112524, 0.03914505640837186, -0.005732854764601783}},
    };
    for (const auto& s : samples)
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(img.at(s.x, s.y, c) - s.rgb[c]) < 1e-5);
}

TEST_CASE("procedural generator contract")
{
    const ProceduralGenerator gen;
    const auto zero = gen.generate(LatentVector::zeros());
    CHECK(zero.has_phenotype_shape());
    for (float v : zero.pixels())
        CHECK(v == 0.0f);

    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        auto z = sample_latent(rng);
        for (std::size_t j = 0; j < z.size(); ++j)
            z.set(j, z[j] * 50.0);
        const auto img = gen.generate(z);
        CHECK(img.has_phenotype_shape());
        CHECK(img.values_in_range());
    }
    CHECK_THROWS_AS(gen.generate(LatentVector::zeros(99)), InvalidArgument);
    const auto up = upsample(zero, kDisplayUpsample);
    CHECK(up.width() == 2048);
    CHECK(up.height() == 1152);
}

TEST_CASE("procedural generator is deterministic and thread-safe")
{
    const ProceduralGenerator gen;
    Rng rng(8);
    std::vector<LatentVector> zs;
    for (int i = 0; i < 8; ++i)
        zs.push_back(sample_latent(rng));
    std::vector<ImageBuffer> sequential;
    for (const auto& z : zs)
        sequential.push_back(gen.generate(z));
    std::vector<std::future<ImageBuffer>> futures;
    for (const auto& z : zs)
        futures.push_back(std::async(std::launch::async, [&gen, &z] { return gen.generate(z); }));
    for (std::size_t i = 0; i < zs.size(); ++i)
        CHECK(futures[i].get() == sequential[i]);
}

TEST_CASE("procedural generator respects its Lipschitz bound")
{
    const ProceduralGenerator gen;
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const auto z = sample_latent(rng);
        auto z2 = z;
        const std::size_t gene = rng.index(100);
        const double delta = (rng.uniform() - 0.5) * 0.2;
        z2.set(gene, z[gene] + delta);
        const double bound = procedural_lipschitz_bound(z, std::abs(delta)) * std::abs(delta);
        const auto a = gen.generate(z);
        const auto b = gen.generate(z2);
        double worst = 0.0;
        for (std::size_t i = 0; i < a.pixels().size(); ++i)
            worst = std::max(worst, static_cast<double>(std::abs(a.pixels()[i] - b.pixels()[i])));
        CHECK(worst <= bound + 1e-5);
    }
    CHECK(procedural_lipschitz_bound(LatentVector::zeros(), 0.0) == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("backend strings")
{
    CHECK(GeneratorBackend::parse("procedural").kind == GeneratorBackend::Kind::procedural);
    const auto m = GeneratorBackend::parse("model:/tmp/g.onnx");
    CHECK(m.kind == GeneratorBackend::Kind::model);
    CHECK(m.model_path->string() == "/tmp/g.onnx");
    CHECK(GeneratorBackend::parse(m.to_string()).model_path == m.model_path);
    CHECK_THROWS_AS(GeneratorBackend::parse("gan"), ConfigError);
    CHECK_THROWS_AS(GeneratorBackend::parse("model:"), ConfigError);
}

TEST_CASE("model generator agrees with the reference implementation")
{
    const ModelGenerator gen(kFixtures / "tiny_generator.onnx");
    std::ifstream in(kFixtures / "reference.json");
    const auto ref = nlohmann::json::parse(in);
    const auto z = LatentVector(ref.at("z").get<std::vector<double>>());
    const auto img = gen.generate(z);
    CHECK(img.has_phenotype_shape());
    CHECK(img.values_in_range());
    for (const auto& p : ref.at("pixels")) {
        const int x = p.at("x"), y = p.at("y");
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(img.at(x, y, c) - p.at("rgb")[c].get<double>()) < 1e-5);
    }
    CHECK(gen.describe().rfind("model:", 0) == 0);
}

TEST_CASE("model generator rejects bad models")
{
    CHECK_THROWS_AS(ModelGenerator(kFixtures / "missing.onnx"), BackendError);
    CHECK_THROWS_AS(ModelGenerator(kFixtures / "wrong_shape_generator.onnx"), BackendError);
    CHECK_THROWS_AS(ModelGenerator(kFixtures / "tiny_scorer.json"), BackendError);
    const ModelGenerator gen(kFixtures / "tiny_generator.onnx");
    CHECK_THROWS_AS(gen.generate(LatentVector::zeros(10)), InvalidArgument);
}

TEST_CASE("model generator concurrent calls match sequential calls")
{
    const ModelGenerator gen(kFixtures / "tiny_generator.onnx");
    Rng rng(4);
    std::vector<LatentVector> zs;
    for (int i = 0; i < 6; ++i)
        zs.push_back(sample_latent(rng));
    std::vector<ImageBuffer> sequential;
    for (const auto& z : zs)
        sequential.push_back(gen.generate(z));
    std::vector<std::future<ImageBuffer>> futures;
    for (const auto& z : zs)
        futures.push_back(std::async(std::launch::async, [&gen, &z] { return gen.generate(z); }));
    for (std::size_t i = 0; i < zs.size(); ++i)
        CHECK(futures[i].get() == sequential[i]);
}

TEST_CASE("phenotype cache recomputes on genotype change")
{
    const ProceduralGenerator gen;
    PhenotypeCache cache(gen);
    Individual ind;
    ind.id = 4;
    ind.genotype = LatentVector::zeros();
    const auto first = cache.get(ind);
    CHECK(cache.get(ind) == first);
    ind.genotype.set(0, 1.0);
    const auto second = cache.get(ind);
    CHECK(second != first);
    CHECK(*second == gen.generate(ind.genotype));
    CHECK(cache.size() == 1);
    cache.clear();
    CHECK(cache.size() == 0);
}
