#include "collabevo/serialization.hpp"

#include "collabevo/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace collabevo {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& doc, const char* key, T& out)
{
    auto it = doc.find(key);
    if (it == doc.end())
        return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key, "has the wrong type");
    }
}

template <typename T>
T required(const json& doc, const char* key)
{
    auto it = doc.find(key);
    if (it == doc.end())
        throw FormatError(std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("field '") + key + "' has the wrong type");
    }
}

void check_version(const json& doc)
{
    const int version = required<int>(doc, "version");
    if (version != kDocumentVersion)
        throw FormatError("unsupported document version " + std::to_string(version));
}

} // namespace

json to_json(const RunConfig& c)
{
    return json{{"population_size", c.population_size},
                {"generations", c.generations},
                {"latent_dim", c.latent_dim},
                {"crossover_prob", c.crossover_prob},
                {"gene_swap_prob", c.gene_swap_prob},
                {"mutation_prob", c.mutation_prob},
                {"per_gene_mutation_rate", c.per_gene_mutation_rate},
                {"local_search_generations", c.local_search_generations},
                {"diversity_threshold", c.diversity_threshold},
                {"hall_of_fame_size", c.hall_of_fame_size},
                {"participants", c.participants},
                {"seed", c.seed}};
}

RunConfig config_from_json(const json& doc)
{
    if (!doc.is_object())
        throw ConfigError("config", "must be an object");
    static const std::set<std::string> known = {
        "population_size", "generations",       "latent_dim",          "crossover_prob",
        "gene_swap_prob",  "mutation_prob",     "per_gene_mutation_rate", "local_search_generations",
        "diversity_threshold", "hall_of_fame_size", "participants",     "seed"};
    for (const auto& [key, _] : doc.items())
        if (!known.contains(key))
            throw ConfigError(key, "unknown config field");

    // Counts are read signed so a negative value is reported instead of wrapping.
    auto read_count = [&](const char* key, std::size_t& out) {
        auto it = doc.find(key);
        if (it == doc.end())
            return;
        if (!it->is_number_integer())
            throw ConfigError(key, "must be an integer");
        const auto v = it->get<std::int64_t>();
        if (v < 0)
            throw ConfigError(key, "must not be negative");
        out = static_cast<std::size_t>(v);
    };

    RunConfig c;
    read_count("population_size", c.population_size);
    read_count("generations", c.generations);
    read_count("latent_dim", c.latent_dim);
    read_count("local_search_generations", c.local_search_generations);
    read_count("hall_of_fame_size", c.hall_of_fame_size);
    read_count("participants", c.participants);
    read_field(doc, "crossover_prob", c.crossover_prob);
    read_field(doc, "gene_swap_prob", c.gene_swap_prob);
    read_field(doc, "mutation_prob", c.mutation_prob);
    read_field(doc, "per_gene_mutation_rate", c.per_gene_mutation_rate);
    read_field(doc, "diversity_threshold", c.diversity_threshold);
    read_field(doc, "seed", c.seed);
    c.validate();
    return c;
}

json to_json(const Individual& ind)
{
    json genes = json::array();
    for (double g : ind.genotype.genes())
        genes.push_back(g);
    return json{{"id", ind.id},
                {"genotype", std::move(genes)},
                {"fitness", ind.fitness ? json(*ind.fitness) : json(nullptr)},
                {"origin", to_string(ind.origin)},
                {"born_generation", ind.born_generation}};
}

Individual individual_from_json(const json& doc)
{
    Individual ind;
    ind.id = required<std::uint64_t>(doc, "id");
    ind.genotype = LatentVector(required<std::vector<double>>(doc, "genotype"));
    const auto& f = doc.at("fitness");
    if (!f.is_null())
        ind.set_fitness(f.get<double>());
    ind.origin = origin_from_string(required<std::string>(doc, "origin"));
    ind.born_generation = required<std::uint32_t>(doc, "born_generation");
    return ind;
}

json to_json(const GenerationRecord& r)
{
    json individuals = json::array();
    for (const auto& i : r.individuals)
        individuals.push_back({{"id", i.id}, {"fitness", i.fitness}, {"origin", to_string(i.origin)}});
    return json{{"generation", r.generation},
                {"mean", r.mean},
                {"stderr", r.stderr_mean},
                {"individuals", std::move(individuals)},
                {"immigrants", r.immigrants},
                {"diversity_cap_hit", r.diversity_cap_hit}};
}

GenerationRecord generation_record_from_json(const json& doc)
{
    GenerationRecord r;
    r.generation = required<std::uint32_t>(doc, "generation");
    r.mean = required<double>(doc, "mean");
    r.stderr_mean = required<double>(doc, "stderr");
    for (const auto& i : doc.at("individuals"))
        r.individuals.push_back({required<std::uint64_t>(i, "id"), required<double>(i, "fitness"),
                                 origin_from_string(required<std::string>(i, "origin"))});
    r.immigrants = doc.value("immigrants", 0u);
    r.diversity_cap_hit = doc.value("diversity_cap_hit", false);
    return r;
}

json to_json(const RunState& s)
{
    json population = json::array();
    for (const auto& ind : s.population)
        population.push_back(to_json(ind));
    json hof = json::array();
    for (const auto& ind : s.hall_of_fame)
        hof.push_back(to_json(ind));
    json history = json::array();
    for (const auto& r : s.fitness_history)
        history.push_back(to_json(r));
    return json{{"version", kDocumentVersion},
                {"config", to_json(s.config)},
                {"generation", s.generation},
                {"population", std::move(population)},
                {"hall_of_fame", std::move(hof)},
                {"rng_state", s.rng.state()},
                {"fitness_history", std::move(history)},
                {"next_id", s.next_id},
                {"pending_immigrants", s.pending_immigrants},
                {"pending_cap_hit", s.pending_cap_hit}};
}

RunState run_state_from_json(const json& doc)
{
    try {
        check_version(doc);
        RunState s;
        s.config = config_from_json(doc.at("config"));
        s.generation = required<std::uint32_t>(doc, "generation");
        for (const auto& ind : doc.at("population"))
            s.population.push_back(individual_from_json(ind));
        for (const auto& ind : doc.at("hall_of_fame"))
            s.hall_of_fame.push_back(individual_from_json(ind));
        s.rng = Rng::from_state(required<std::string>(doc, "rng_state"));
        for (const auto& r : doc.at("fitness_history"))
            s.fitness_history.push_back(generation_record_from_json(r));
        s.next_id = required<std::uint64_t>(doc, "next_id");
        s.pending_immigrants = doc.value("pending_immigrants", 0u);
        s.pending_cap_hit = doc.value("pending_cap_hit", false);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("run state: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("run state: ") + e.what());
    }
}

std::string serialize(const RunState& state)
{
    return to_json(state).dump(2);
}

RunState deserialize_run_state(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("run state: ") + e.what());
    }
    return run_state_from_json(doc);
}

void save_run_state(const RunState& state, const std::filesystem::path& path)
{
    write_file_atomic(path, serialize(state));
}

RunState load_run_state(const std::filesystem::path& path)
{
    return deserialize_run_state(read_file(path));
}

RunConfig load_config(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
    if (doc.contains("version")) {
        check_version(doc);
        return config_from_json(doc.value("config", json::object()));
    }
    return config_from_json(doc);
}

void save_config(const RunConfig& config, const std::filesystem::path& path)
{
    write_file_atomic(path, json{{"version", kDocumentVersion}, {"config", to_json(config)}}.dump(2));
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out)
            throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace collabevo
