#include "collabevo/errors.hpp"
#include "collabevo/evaluation.hpp"
#include "collabevo/evolution.hpp"
#include "collabevo/generator.hpp"
#include "collabevo/image.hpp"
#include "collabevo/report.hpp"
#include "collabevo/scoring.hpp"
#include "collabevo/serialization.hpp"
#include "collabevo/service.hpp"
#include "collabevo/service_http.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace collabevo;

namespace {

struct CommonOptions
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string scorer = "synthetic";
    std::string generator = "procedural";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_out = true)
{
    cmd->add_option("--config", o.config, "run config document (JSON)")->envname("COLLABEVO_CONFIG");
    cmd->add_option("--seed", o.seed, "seed override")->envname("COLLABEVO_SEED");
    auto* out = cmd->add_option("--out", o.out, "output directory")->envname("COLLABEVO_OUT");
    if (needs_out)
        out->required();
    cmd->add_option("--scorer", o.scorer, "synthetic | model:PATH")->envname("COLLABEVO_SCORER");
    cmd->add_option("--generator", o.generator, "procedural | model:PATH")->envname("COLLABEVO_GENERATOR");
}

RunConfig resolve_config(const CommonOptions& o)
{
    RunConfig config = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed)
        config.seed = *o.seed;
    config.validate();
    return config;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes)
{
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

void write_text(const fs::path& path, const std::string& text)
{
    write_file_atomic(path, text);
}

std::string gen_tag(std::uint32_t g)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04u", g);
    return buf;
}

std::string fitness_csv(const RunState& state)
{
    std::ostringstream csv;
    write_fitness_csv(state.fitness_history, csv);
    return csv.str();
}

void write_contact_sheet(const fs::path& path, const Population& population, const Generator& generator)
{
    std::vector<ImageBuffer> images;
    images.reserve(population.size());
    for (const auto& ind : population)
        images.push_back(generator.generate(ind.genotype));
    write_bytes(path, to_png_bytes(contact_sheet(images, 5)));
}

void write_hall_of_fame(const fs::path& dir, const RunState& state, const Generator& generator)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < state.hall_of_fame.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "rank-%02zu.png", i + 1);
        const auto image = upsample(generator.generate(state.hall_of_fame[i].genotype), kDisplayUpsample);
        write_bytes(dir / name, to_png_bytes(image));
    }
}

void write_curve(const fs::path& dir, std::span<const std::vector<GenerationRecord>> runs, const std::string& title)
{
    const auto curve = aggregate_runs(runs);
    std::ostringstream csv;
    csv << "generation,mean,stderr\n";
    for (std::size_t g = 0; g < curve.size(); ++g)
        csv << g << ',' << format_double(curve[g].mean) << ',' << format_double(curve[g].stderr_mean) << '\n';
    write_text(dir / "fitness_curve.csv", csv.str());
    write_bytes(dir / "fitness_curve.png", render_fitness_curve_png(curve, title));
}

int cmd_run_auto(const CommonOptions& o, std::size_t runs)
{
    if (runs < 1)
        throw InvalidArgument("--runs must be at least 1");
    const RunConfig base = resolve_config(o);
    const auto generator = make_generator(GeneratorBackend::parse(o.generator));
    const auto scorer = make_scorer(ScorerBackend::parse(o.scorer));
    const fs::path out = o.out;
    fs::create_directories(out);

    std::vector<std::vector<GenerationRecord>> histories;
    for (std::size_t r = 0; r < runs; ++r) {
        RunConfig config = base;
        config.seed = base.seed + r;
        const fs::path dir = out / ("run-" + std::to_string(config.seed));
        fs::create_directories(dir / "contact_sheets");
        const auto state = run_automatic(config, *scorer, *generator, [&](const RunState& s) {
            write_contact_sheet(dir / "contact_sheets" / ("generation-" + gen_tag(s.generation) + ".png"),
                                s.population, *generator);
        });
        write_text(dir / "fitness.csv", fitness_csv(state));
        save_run_state(state, dir / "state.json");
        write_hall_of_fame(dir / "hall_of_fame", state, *generator);
        const std::vector<std::vector<GenerationRecord>> single{state.fitness_history};
        write_curve(dir, single, "seed " + std::to_string(config.seed));
        std::cout << "run seed " << config.seed << ": generation 0 mean " << format_double(state.fitness_history.front().mean)
                  << ", final mean " << format_double(state.fitness_history.back().mean) << '\n';
        histories.push_back(state.fitness_history);
    }
    write_curve(out, histories, "mean fitness over " + std::to_string(runs) + " runs");
    return 0;
}

int cmd_local_search(const CommonOptions& o, std::size_t count)
{
    if (count < 1)
        throw InvalidArgument("--count must be at least 1");
    const RunConfig config = resolve_config(o);
    const auto generator = make_generator(GeneratorBackend::parse(o.generator));
    const auto scorer = make_scorer(ScorerBackend::parse(o.scorer));
    const AutomaticEvaluator evaluate(*generator, *scorer);
    const fs::path out = o.out;
    fs::create_directories(out);

    Rng master(config.seed);
    std::ostringstream traces, summary;
    traces << "image,generation,best_score\n";
    summary << "image,initial_score,final_score,accepted_steps\n";
    double improvement = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        Rng stream = master.split();
        const LatentVector start = sample_latent(stream, config.latent_dim);
        const auto result =
            local_search(start, evaluate, config.local_search_generations, config.per_gene_mutation_rate, stream);
        char name[32];
        std::snprintf(name, sizeof(name), "image-%02zu", i + 1);
        write_bytes(out / (std::string(name) + "-before.png"), to_png_bytes(generator->generate(start)));
        write_bytes(out / (std::string(name) + "-after.png"), to_png_bytes(generator->generate(result.best)));
        const auto& scores = result.trace.best_scores;
        for (std::size_t g = 0; g < scores.size(); ++g)
            traces << i + 1 << ',' << g << ',' << format_double(scores[g]) << '\n';
        summary << i + 1 << ',' << format_double(scores.front()) << ',' << format_double(scores.back()) << ','
                << result.trace.accepted_steps << '\n';
        improvement += scores.back() - scores.front();
    }
    write_text(out / "traces.csv", traces.str());
    write_text(out / "summary.csv", summary.str());
    std::cout << count << " local searches, mean improvement " << format_double(improvement / count) << '\n';
    return 0;
}

std::vector<std::string> split_ids(const std::string& text)
{
    std::vector<std::string> ids;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty())
            ids.push_back(item);
    return ids;
}

struct EvaluateOptions
{
    std::string trials;
    std::string responses;
    std::string condition;
    std::string candidates;
    std::string comparators;
};

int cmd_evaluate(const CommonOptions& o, const EvaluateOptions& e)
{
    const fs::path out = o.out;
    fs::create_directories(out);
    if (!e.responses.empty()) {
        if (e.trials.empty())
            throw InvalidArgument("--responses requires --trials");
        std::ifstream tin(e.trials), rin(e.responses);
        if (!tin)
            throw DataError("cannot open " + e.trials);
        if (!rin)
            throw DataError("cannot open " + e.responses);
        const auto trials = read_trials_csv(tin);
        const auto responses = read_responses_csv(rin);
        const auto summary = preference_proportions(trials, responses);
        std::ostringstream csv;
        write_proportions_csv(summary, csv);
        write_text(out / "proportions.csv", csv.str());
        write_text(out / "summary.json", summary_to_json(summary).dump(2) + "\n");
        std::cout << "mean preference " << format_double(summary.mean) << " (" << summary.successes << '/'
                  << summary.total << "), binomial p " << format_double(summary.binomial_p) << '\n';
        if (!summary.orphans.empty())
            std::cerr << "warning: " << summary.orphans.size() << " responses name unknown trials\n";
        return 0;
    }
    if (e.condition.empty())
        throw InvalidArgument("evaluate needs --responses (analyze) or --condition (build trials)");
    const auto candidates = split_ids(e.candidates);
    const auto comparators = split_ids(e.comparators);
    Rng rng(o.seed.value_or(0));
    const auto trials = build_trials(condition_from_string(e.condition), candidates, comparators, rng);
    std::ostringstream csv;
    write_trials_csv(trials, csv);
    write_text(out / "trials.csv", csv.str());
    std::cout << trials.size() << " trials written\n";
    return 0;
}

int cmd_export(const CommonOptions& o, const std::string& state_path)
{
    const RunState state = load_run_state(state_path);
    const auto generator = make_generator(GeneratorBackend::parse(o.generator));
    const fs::path out = o.out;
    fs::create_directories(out / "population");
    for (std::size_t i = 0; i < state.population.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "individual-%02zu.png", i);
        write_bytes(out / "population" / name,
                    to_png_bytes(upsample(generator->generate(state.population[i].genotype), kDisplayUpsample)));
    }
    write_contact_sheet(out / ("contact-sheet-" + gen_tag(state.generation) + ".png"), state.population, *generator);
    write_hall_of_fame(out / "hall_of_fame", state, *generator);
    write_text(out / "fitness.csv", fitness_csv(state));
    if (!state.fitness_history.empty()) {
        const std::vector<std::vector<GenerationRecord>> single{state.fitness_history};
        write_curve(out, single, "seed " + std::to_string(state.config.seed));
    }
    return 0;
}

int cmd_serve(const std::string& config_path)
{
    const auto options = load_service_options(
        config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path),
        [](const char* name) -> std::optional<std::string> {
            if (const char* v = std::getenv(name))
                return std::string(v);
            return std::nullopt;
        });
    if (!run_server(options))
        throw Error("could not listen on " + options.bind_address + ":" + std::to_string(options.port));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"collabevo: latent-variable evolution with automatic and collaborative fitness"};
    app.require_subcommand(1, 1);

    CommonOptions common;
    std::size_t runs = 1;
    std::size_t count = 20;
    std::string state_path;
    std::string serve_config;
    EvaluateOptions eval;

    auto* run_auto = app.add_subcommand("run-auto", "automatic evolution runs, one directory per seed");
    add_common(run_auto, common);
    run_auto->add_option("--runs", runs, "number of seeds, starting at --seed")->envname("COLLABEVO_RUNS");

    auto* ls = app.add_subcommand("local-search", "local search from random latents");
    add_common(ls, common);
    ls->add_option("--count", count, "number of images")->envname("COLLABEVO_COUNT");

    auto* serve = app.add_subcommand("serve", "run the collaborative HTTP service");
    serve->add_option("--config", serve_config, "service config document (JSON)")->envname("COLLABEVO_CONFIG");

    auto* evaluate = app.add_subcommand("evaluate", "build pairwise trials or analyze responses");
    add_common(evaluate, common);
    evaluate->add_option("--trials", eval.trials, "trials CSV");
    evaluate->add_option("--responses", eval.responses, "responses CSV to analyze");
    evaluate->add_option("--condition", eval.condition, "condition for new trials");
    evaluate->add_option("--candidates", eval.candidates, "comma-separated candidate image ids");
    evaluate->add_option("--comparators", eval.comparators, "comma-separated comparator image ids");

    auto* exp = app.add_subcommand("export", "render images, CSV and plot from a saved run state");
    add_common(exp, common);
    exp->add_option("--state", state_path, "run state document")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run_auto)
            return cmd_run_auto(common, runs);
        if (*ls)
            return cmd_local_search(common, count);
        if (*serve)
            return cmd_serve(serve_config);
        if (*evaluate)
            return cmd_evaluate(common, eval);
        if (*exp)
            return cmd_export(common, state_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: invalid config: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
