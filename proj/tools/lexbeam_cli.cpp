#include <lexbeam/io.hpp>
#include <lexbeam/lexbeam.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace lexbeam;
using io::json;

namespace {

void print_error(const std::string& kind, const std::string& message)
{
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

void print_warning(const std::string& message, const std::optional<std::string>& image_id = std::nullopt)
{
    json w{{"warning", message}};
    if (image_id) {
        w["image_id"] = *image_id;
    }
    std::cerr << w.dump() << '\n';
}

std::string dump_line(const json& j)
{
    return j.dump(-1, ' ', false, json::error_handler_t::strict) + '\n';
}

// -- decode ---------------------------------------------------------------

struct DecodeOptions {
    std::string scorer;
    std::string constraints;
    std::size_t beam_width = 5;
    std::size_t max_len = 16;
    std::string mode = "failure";
    std::string fallback = "on";
    bool length_normalize = false;
    std::size_t jobs = 1;

    json flags() const
    {
        return {{"scorer", scorer},     {"constraints", constraints}, {"beam_width", beam_width},
                {"max_len", max_len},   {"mode", mode},               {"fallback", fallback},
                {"length_normalize", length_normalize}, {"jobs", jobs}};
    }
};

std::string run_decode(const DecodeOptions& o)
{
    const BigramModel model = io::load_bigram(o.scorer);
    std::vector<io::ConstraintSet> sets;
    std::size_t line = 0;
    for (const auto& r : io::read_records(o.constraints)) {
        sets.push_back(io::constraints_from_json(r, o.constraints + " record " + std::to_string(++line)));
    }

    DecodeConfig cfg;
    cfg.beam_width = o.beam_width;
    cfg.max_len = o.max_len;
    cfg.min_satisfied_fallback = o.fallback == "on";
    cfg.length_normalize = o.length_normalize;
    const auto mode = o.mode == "faithful" ? PhraseMatchMode::reset_on_mismatch : PhraseMatchMode::failure_links;

    std::vector<std::string> lines(sets.size());
    std::vector<std::exception_ptr> errors(sets.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < sets.size(); i = next++) {
            try {
                const auto& set = sets[i];
                const auto fsm = compile(resolve(set.groups, model.vocabulary()), set.min_satisfied,
                                         model.vocabulary(), mode);
                const auto result = decode(model, fsm, cfg);
                json out = json::object();
                if (set.image_id) {
                    out["image_id"] = *set.image_id;
                }
                out["caption"] = model.vocabulary().decode(result.caption);
                out["logprob"] = result.logprob;
                out["satisfied"] = result.satisfied_count;
                lines[i] = dump_line(out);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(o.jobs, 1, std::max<std::size_t>(sets.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }

    std::string out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (errors[i]) {
            std::rethrow_exception(errors[i]);
        }
        out += lines[i];
    }
    return out;
}

// -- filter ---------------------------------------------------------------

struct FilterOptions {
    std::string detections;
    std::string hierarchy;
    std::string blacklist;
    std::string mode = "full";
    std::size_t top_k = default_top_k;
    double iou_threshold = default_iou_threshold;
    std::size_t min_satisfied = 2;

    json flags() const
    {
        return {{"detections", detections}, {"hierarchy", hierarchy},         {"blacklist", blacklist},
                {"mode", mode},             {"top_k", top_k},                 {"iou_threshold", iou_threshold},
                {"min_satisfied", min_satisfied}};
    }
};

FilterMode filter_mode(const std::string& s)
{
    if (s == "no-class") {
        return FilterMode::no_class;
    }
    if (s == "no-overlap") {
        return FilterMode::no_overlap;
    }
    return s == "none" ? FilterMode::none : FilterMode::full;
}

std::string run_filter(const FilterOptions& o)
{
    const auto hierarchy = io::load_hierarchy(o.hierarchy);
    const auto blacklist = o.blacklist.empty() ? Blacklist::defaults() : io::load_blacklist(o.blacklist);
    std::string out;
    std::size_t line = 0;
    for (const auto& r : io::read_records(o.detections)) {
        const auto rec = io::detections_from_json(r, o.detections + " record " + std::to_string(++line));
        const auto result =
            filter_constraints(rec.detections, hierarchy, blacklist, filter_mode(o.mode), o.top_k, o.iou_threshold);
        for (const auto& w : result.warnings) {
            print_warning(w, rec.image_id);
        }
        io::ConstraintSet set{rec.image_id, std::min(o.min_satisfied, result.groups.size()), result.groups};
        out += dump_line(io::to_json(set));
    }
    return out;
}

// -- sample ---------------------------------------------------------------

struct SampleOptions {
    std::string images;
    std::size_t target = 0;
    std::size_t candidates = 5;
    std::uint64_t seed = 0;
    std::string domain;

    json flags() const
    {
        return {{"images", images}, {"target", target}, {"candidates", candidates}, {"seed", seed}, {"domain", domain}};
    }
};

std::string run_sample(const SampleOptions& o)
{
    std::vector<ImageRecord> images;
    std::map<std::string, const ImageRecord*> by_id;
    std::size_t line = 0;
    for (const auto& r : io::read_records(o.images)) {
        images.push_back(io::image_from_json(r, o.images + " record " + std::to_string(++line)));
    }
    for (const auto& img : images) {
        if (!by_id.emplace(img.image_id, &img).second) {
            fail(ErrorCode::ParseError, o.images + ": duplicate image_id '" + img.image_id + "'");
        }
    }
    std::optional<DomainSpec> spec;
    if (!o.domain.empty()) {
        spec = io::domain_from_json(io::parse(io::read_file(o.domain), o.domain), o.domain);
    }

    const auto split = exclude(images);
    const auto state = sample(split.eligible, split.auto_include, o.target, o.candidates, o.seed);
    if (state.selected.size() < o.target) {
        print_warning("pools exhausted after " + std::to_string(state.selected.size()) + " of " +
                      std::to_string(o.target) + " images");
    }

    std::string out;
    for (std::size_t i = 0; i < state.selected.size(); ++i) {
        const auto& img = *by_id.at(state.selected[i]);
        json rec{{"image_id", img.image_id},
                 {"order", i},
                 {"source", i < split.auto_include.size() ? "auto_include" : "sampled"},
                 {"classes", img.classes}};
        if (spec) {
            rec["domain"] = std::string(to_string(classify_domain(img, *spec)));
        }
        out += dump_line(rec);
    }
    return out;
}

// -- stats ----------------------------------------------------------------

struct StatsOptions {
    std::string captions;
    std::size_t n_max = 4;

    json flags() const { return {{"captions", captions}, {"n_max", n_max}}; }
};

std::string run_stats(const StatsOptions& o)
{
    std::vector<std::vector<std::string>> tokenized;
    std::size_t line = 0;
    for (const auto& r : io::read_records(o.captions)) {
        for (const auto& c : io::captions_from_json(r, o.captions + " record " + std::to_string(++line))) {
            tokenized.push_back(tokenize_caption(c));
        }
    }
    std::string out;
    for (const auto& [n, count] : ngram_stats(tokenized, o.n_max)) {
        out += dump_line({{"n", n}, {"unique", count}, {"captions", tokenized.size()}});
    }
    return out;
}

// -- inspect-fsm ----------------------------------------------------------

struct InspectOptions {
    std::string constraints;
    std::string vocab;
    std::string mode = "failure";

    json flags() const { return {{"constraints", constraints}, {"vocab", vocab}, {"mode", mode}}; }
};

std::string mask_bits(GroupMask mask, std::size_t n)
{
    std::string s;
    for (std::size_t g = n; g-- > 0;) {
        s += (mask >> g) & 1U ? '1' : '0';
    }
    return s.empty() ? "-" : s;
}

std::string describe(const ConstraintFsm& fsm, const Vocabulary& vocab, const io::ConstraintSet& set)
{
    std::ostringstream out;
    const std::size_t n = fsm.state_count();
    std::size_t accepting = 0;
    for (StateId s = 0; s < n; ++s) {
        accepting += fsm.accepting(s) ? 1 : 0;
    }
    if (set.image_id) {
        out << "# " << *set.image_id << '\n';
    }
    if (n == 1) {
        out << "1 state, " << (accepting ? "accepting" : "not accepting") << '\n';
    } else {
        out << n << " states, " << accepting << " accepting\n";
    }
    out << "groups " << fsm.group_count() << ", min_satisfied " << fsm.min_satisfied() << '\n';
    for (std::size_t g = 0; g < fsm.groups().size(); ++g) {
        out << "  group " << g << " '" << set.groups[g].label << "':";
        for (const auto& alt : fsm.groups()[g].alternatives) {
            out << " [";
            for (std::size_t i = 0; i < alt.size(); ++i) {
                out << (i ? " " : "") << vocab.token(alt[i]);
            }
            out << ']';
        }
        out << '\n';
    }

    std::vector<TokenId> alphabet;
    for (const auto& g : fsm.groups()) {
        for (const auto& alt : g.alternatives) {
            alphabet.insert(alphabet.end(), alt.begin(), alt.end());
        }
    }
    std::sort(alphabet.begin(), alphabet.end());
    alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
    std::optional<TokenId> other;
    for (TokenId t = 0; t < vocab.size(); ++t) {
        if (!Vocabulary::is_delimiter(t) && !std::binary_search(alphabet.begin(), alphabet.end(), t)) {
            other = t;
            break;
        }
    }

    for (StateId s = 0; s < n; ++s) {
        out << 'q' << s << " mask=" << mask_bits(fsm.satisfied_mask(s), fsm.group_count())
            << " satisfied=" << fsm.satisfied_count(s);
        if (!fsm.progress(s).empty()) {
            out << " progress=[";
            const auto p = fsm.progress(s);
            for (std::size_t i = 0; i < p.size(); ++i) {
                out << (i ? " " : "") << vocab.token(p[i]);
            }
            out << ']';
        }
        out << (fsm.accepting(s) ? " accepting" : "") << '\n';
        for (TokenId t : alphabet) {
            const StateId to = fsm.step(s, t);
            if (to != s) {
                out << "  " << vocab.token(t) << " -> q" << to << '\n';
            }
        }
        if (other && fsm.step(s, *other) != s) {
            out << "  <other> -> q" << fsm.step(s, *other) << '\n';
        }
    }
    return out.str();
}

std::string run_inspect(const InspectOptions& o)
{
    std::vector<io::ConstraintSet> sets;
    std::size_t line = 0;
    for (const auto& r : io::read_records(o.constraints)) {
        sets.push_back(io::constraints_from_json(r, o.constraints + " record " + std::to_string(++line)));
    }
    std::optional<Vocabulary> shared;
    if (!o.vocab.empty()) {
        shared = io::load_vocabulary(o.vocab);
    }
    const auto mode = o.mode == "faithful" ? PhraseMatchMode::reset_on_mismatch : PhraseMatchMode::failure_links;
    std::string out;
    for (const auto& set : sets) {
        Vocabulary vocab = shared ? *shared : [&] {
            std::vector<std::string> words;
            for (const auto& g : set.groups) {
                for (const auto& alt : g.alternatives) {
                    for (const auto& w : alt) {
                        if (std::find(words.begin(), words.end(), w) == words.end()) {
                            words.push_back(w);
                        }
                    }
                }
            }
            return Vocabulary(words);
        }();
        const auto fsm = compile(resolve(set.groups, vocab), set.min_satisfied, vocab, mode);
        out += describe(fsm, vocab, set);
    }
    return out;
}

// -- driver ---------------------------------------------------------------

int run(const std::vector<std::string>& args, bool allow_replay);

struct Invocation {
    std::string subcommand;
    json flags;
    std::vector<std::string> inputs;
    std::optional<std::uint64_t> seed;
};

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text << std::flush;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text)) {
        fail(ErrorCode::IoFailure, "cannot write '" + path + "'");
    }
}

int run(const std::vector<std::string>& args, bool allow_replay)
{
    CLI::App app{"Constrained beam search over finite-state constraint automata", "lexbeam"};
    app.set_version_flag("--version", std::string("lexbeam ") + lexbeam::version);
    app.require_subcommand(1);
    std::string manifest_path;
    std::string output_path = "-";
    app.add_option("--manifest", manifest_path, "Write a run manifest (JSON) to this path");
    app.add_option("-o,--output", output_path, "Write records here instead of stdout");

    DecodeOptions dec;
    auto* decode_cmd = app.add_subcommand("decode", "Constrained beam search, one JSON line per constraint record");
    decode_cmd->add_option("--scorer", dec.scorer, "Bigram model JSON")->required();
    decode_cmd->add_option("--constraints", dec.constraints, "Constraint records (JSON or JSON-lines)")->required();
    decode_cmd->add_option("--beam-width", dec.beam_width, "Hypotheses kept per automaton state")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    decode_cmd->add_option("--max-len", dec.max_len, "Maximum caption tokens, end token excluded")
        ->capture_default_str();
    decode_cmd->add_option("--mode", dec.mode, "Phrase matching")
        ->capture_default_str()
        ->check(CLI::IsMember({"faithful", "failure"}));
    decode_cmd->add_option("--fallback", dec.fallback, "Relax the quota when no hypothesis meets it")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    decode_cmd->add_flag("--length-normalize", dec.length_normalize, "Rank finished captions by per-token score");
    decode_cmd->add_option("--jobs", dec.jobs, "Records decoded in parallel")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    FilterOptions fil;
    auto* filter_cmd = app.add_subcommand("filter", "Detections to constraint records");
    filter_cmd->add_option("--detections", fil.detections, "Detection records (JSON-lines)")->required();
    filter_cmd->add_option("--hierarchy", fil.hierarchy, "Class hierarchy records")->required();
    filter_cmd->add_option("--blacklist", fil.blacklist, "Blacklisted classes, one per line (default: built-in)");
    filter_cmd->add_option("--mode", fil.mode, "Filtering stages to apply")
        ->capture_default_str()
        ->check(CLI::IsMember({"full", "no-class", "no-overlap", "none"}));
    filter_cmd->add_option("--top-k", fil.top_k, "Maximum constraint groups")->capture_default_str();
    filter_cmd->add_option("--iou-threshold", fil.iou_threshold, "Overlap threshold for ancestor suppression")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    filter_cmd->add_option("--min-satisfied", fil.min_satisfied, "Quota written to each record (clamped)")
        ->capture_default_str();

    SampleOptions smp;
    auto* sample_cmd = app.add_subcommand("sample", "Entropy-maximising image selection");
    sample_cmd->add_option("--images", smp.images, "Image records (JSON-lines)")->required();
    sample_cmd->add_option("--target", smp.target, "Number of images to select")->required();
    sample_cmd->add_option("--candidates", smp.candidates, "Candidates drawn per turn")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sample_cmd->add_option("--seed", smp.seed, "Random seed")->required();
    sample_cmd->add_option("--domain", smp.domain, "Domain spec JSON; adds a domain label per image");

    StatsOptions sts;
    auto* stats_cmd = app.add_subcommand("stats", "Unique n-gram counts of a caption corpus");
    stats_cmd->add_option("--captions", sts.captions, "Caption records (JSON-lines)")->required();
    stats_cmd->add_option("--n-max", sts.n_max, "Largest n")->capture_default_str()->check(CLI::PositiveNumber);

    InspectOptions ins;
    auto* inspect_cmd = app.add_subcommand("inspect-fsm", "Print the compiled constraint automaton");
    inspect_cmd->add_option("--constraints", ins.constraints, "Constraint records")->required();
    inspect_cmd->add_option("--vocab", ins.vocab, "Vocabulary (text, JSON array or model file)");
    inspect_cmd->add_option("--mode", ins.mode, "Phrase matching")
        ->capture_default_str()
        ->check(CLI::IsMember({"faithful", "failure"}));

    std::string replay_path;
    CLI::App* replay_cmd = nullptr;
    if (allow_replay) {
        replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
        replay_cmd->add_option("manifest", replay_path, "Manifest written by --manifest")->required();
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (app.get_subcommands().empty()) {
            const auto name = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.rfind('-', 0) != 0; });
            print_error("UnknownSubcommand", name == args.end() ? std::string(e.what()) : "unknown subcommand '" + *name + "'");
        } else {
            print_error("BadFlag", e.what());
        }
        return 1;
    }

    if (replay_cmd && replay_cmd->parsed()) {
        const json manifest = io::parse(io::read_file(replay_path), replay_path);
        auto recorded = io::field<std::vector<std::string>>(manifest, "args", replay_path);
        if (output_path != "-") {
            recorded.insert(recorded.begin(), {"--output", output_path});
        }
        return run(recorded, false);
    }

    Invocation inv;
    std::string text;
    if (decode_cmd->parsed()) {
        inv = {"decode", dec.flags(), {dec.scorer, dec.constraints}, std::nullopt};
        text = run_decode(dec);
    } else if (filter_cmd->parsed()) {
        inv = {"filter", fil.flags(), {fil.detections, fil.hierarchy}, std::nullopt};
        if (!fil.blacklist.empty()) {
            inv.inputs.push_back(fil.blacklist);
        }
        text = run_filter(fil);
    } else if (sample_cmd->parsed()) {
        inv = {"sample", smp.flags(), {smp.images}, smp.seed};
        if (!smp.domain.empty()) {
            inv.inputs.push_back(smp.domain);
        }
        text = run_sample(smp);
    } else if (stats_cmd->parsed()) {
        inv = {"stats", sts.flags(), {sts.captions}, std::nullopt};
        text = run_stats(sts);
    } else {
        inv = {"inspect-fsm", ins.flags(), {ins.constraints}, std::nullopt};
        if (!ins.vocab.empty()) {
            inv.inputs.push_back(ins.vocab);
        }
        text = run_inspect(ins);
    }
    write_output(output_path, text);

    if (!manifest_path.empty()) {
        std::vector<std::string> replay_args;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--manifest" || args[i] == "-o" || args[i] == "--output") {
                ++i;
            } else if (args[i].rfind("--manifest=", 0) != 0 && args[i].rfind("--output=", 0) != 0) {
                replay_args.push_back(args[i]);
            }
        }
        json manifest{{"tool", "lexbeam"},
                      {"version", lexbeam::version},
                      {"subcommand", inv.subcommand},
                      {"args", replay_args},
                      {"flags", inv.flags},
                      {"inputs", inv.inputs},
                      {"output", output_path},
                      {"seed", inv.seed ? json(*inv.seed) : json(nullptr)}};
        std::ofstream f(manifest_path, std::ios::binary);
        if (!f || !(f << manifest.dump(2) << '\n')) {
            fail(ErrorCode::IoFailure, "cannot write manifest '" + manifest_path + "'");
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    try {
        code = run(std::vector<std::string>(argv + 1, argv + argc), true);
    } catch (const Error& e) {
        print_error(std::string(to_string(e.code())), e.what());
        return e.is_input_error() ? 1 : 2;
    } catch (const std::exception& e) {
        print_error("InternalError", e.what());
        return 2;
    }
    if (std::getenv("LEXBEAM_TIMING") != nullptr) {
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        std::cerr << json{{"wall_time_ms", ms}}.dump() << '\n';
    }
    return code;
}
