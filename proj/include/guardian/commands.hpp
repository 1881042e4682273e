#pragma once

// Pipeline stages as file-to-file commands. Each stage reads the artifacts
// of the previous one from the output directory, checks their provenance
// headers against the active config, and writes its own artifacts
// atomically.
//
//   simulate  config.ini players.tsv events.tsv (pre-trial days)
//   train     model.txt train_summary.tsv
//   trial     trial_events.tsv trial_players.tsv ledger.tsv trial_summary.tsv risk_scores.tsv
//   analyze   effects.tsv night.tsv balance.tsv
//   report    report.txt

#include "guardian/artifact.hpp"
#include "guardian/errors.hpp"
#include "guardian/study.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace guardian::commands {

namespace fs = std::filesystem;

struct Layout {
    fs::path dir;

    [[nodiscard]] fs::path config() const { return dir / "config.ini"; }
    [[nodiscard]] fs::path players() const { return dir / "players.tsv"; }
    [[nodiscard]] fs::path events() const { return dir / "events.tsv"; }
    [[nodiscard]] fs::path model() const { return dir / "model.txt"; }
    [[nodiscard]] fs::path train_summary() const { return dir / "train_summary.tsv"; }
    [[nodiscard]] fs::path trial_events() const { return dir / "trial_events.tsv"; }
    [[nodiscard]] fs::path trial_players() const { return dir / "trial_players.tsv"; }
    [[nodiscard]] fs::path ledger() const { return dir / "ledger.tsv"; }
    [[nodiscard]] fs::path trial_summary() const { return dir / "trial_summary.tsv"; }
    [[nodiscard]] fs::path risk_scores() const { return dir / "risk_scores.tsv"; }
    [[nodiscard]] fs::path effects() const { return dir / "effects.tsv"; }
    [[nodiscard]] fs::path night() const { return dir / "night.tsv"; }
    [[nodiscard]] fs::path balance() const { return dir / "balance.tsv"; }
    [[nodiscard]] fs::path report() const { return dir / "report.txt"; }
};

// Pre-trial artifacts carry the simulation seed, trial artifacts the trial seed.
inline ArtifactHeader sim_header(const RunConfig& c, std::string kind) { return {std::move(kind), config_hash(c), c.sim.seed}; }
inline ArtifactHeader trial_header(const RunConfig& c, std::string kind) {
    return {std::move(kind), config_hash(c), c.trial.seed};
}

// ============================================================================
// FILE HELPERS
// ============================================================================

// Output files of one command, committed together once every body is written.
class OutputSet {
public:
    std::ostream& open(const fs::path& path, const ArtifactHeader& header) {
        files_.push_back(std::make_unique<AtomicFile>(path));
        auto& out = files_.back()->stream();
        out << header.line() << '\n';
        return out;
    }

    void commit() {
        for (auto& f : files_) f->commit();
    }

private:
    std::vector<std::unique_ptr<AtomicFile>> files_;
};

// Opens an artifact after checking its header; parse failures become input
// errors naming the file.
template <typename F>
auto read_artifact(const fs::path& path, const ArtifactHeader& expected, F&& parse) {
    require_header(path, expected);
    auto in = open_input(path);
    std::string header;
    std::getline(in, header);
    try {
        return parse(in);
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_event_file(std::ostream& out, const EventLog& log) {
    out << "# covered_days=" << log.covered_days() << '\n' << "# day\thour\tlayer\tactor\ttarget\tviolation\n";
    write_events(out, log.all());
}

inline EventLog read_event_file(std::istream& in) {
    std::string meta;
    std::getline(in, meta);
    if (meta.rfind("# covered_days=", 0) != 0) throw std::invalid_argument("missing covered_days line");
    const Day days = parse_int<Day>(std::string_view(meta).substr(15));
    auto log = read_events(in, days);
    if (log.covered_days() != days) throw std::invalid_argument("events fall outside the covered days");
    return log;
}

inline std::string event_file_text(const EventLog& log) {
    std::ostringstream s;
    write_event_file(s, log);
    return s.str();
}

inline std::string players_text(std::span<const PlayerRecord> players) {
    std::ostringstream s;
    write_players(s, players);
    return s.str();
}

inline std::string rest_of(std::istream& in) {
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ============================================================================
// SIMULATE
// ============================================================================

inline void simulate(const RunConfig& cfg, std::ostream& log) {
    const Layout at{cfg.out_dir};
    const WorldState w = simulate_pretrial(cfg);
    OutputSet out;
    out.open(at.config(), sim_header(cfg, "config")) << serialize(cfg);
    write_players(out.open(at.players(), sim_header(cfg, "players")), w.players);
    write_event_file(out.open(at.events(), sim_header(cfg, "events")), w.log);
    out.commit();
    log << "simulate: " << w.players.size() << " players, " << w.log.size() << " events over " << w.log.covered_days()
        << " days -> " << at.dir.string() << '\n';
}

// ============================================================================
// TRAIN
// ============================================================================

inline void train(const RunConfig& cfg, std::ostream& log) {
    const Layout at{cfg.out_dir};
    const auto players = read_artifact(at.players(), sim_header(cfg, "players"), [](std::istream& in) { return read_players(in); });
    const auto events = read_artifact(at.events(), sim_header(cfg, "events"), read_event_file);
    if (players.size() != cfg.sim.population) throw InputError(at.players().string() + ": population does not match the config");
    if (events.covered_days() != cfg.trial.start_day)
        throw InputError(at.events().string() + ": expected " + std::to_string(cfg.trial.start_day) + " pre-trial days");

    RiskModelTrainReport rep;
    const RiskModel model = train_model(players, events, cfg, &rep);
    // Held out: labels from the last pre-trial week, which neither training
    // anchor sees.
    const auto ev = evaluate_risk_model(model, players, events, cfg.trial.start_day);

    OutputSet out;
    save(out.open(at.model(), sim_header(cfg, "model")), model);
    auto& s = out.open(at.train_summary(), sim_header(cfg, "train-summary"));
    s << "metric\tvalue\n";
    for (Layer l : kAllLayers) {
        const auto& L = rep.layers[layer_index(l)];
        s << "weak_" << layer_name(l) << "_pairs\t" << L.pairs << '\n'
          << "weak_" << layer_name(l) << "_positives\t" << L.positives << '\n'
          << "weak_" << layer_name(l) << "_final_loss\t" << format_double(L.final_loss) << '\n';
    }
    s << "stack_rows\t" << rep.stack_rows << '\n'
      << "stack_positives\t" << rep.stack_positives << '\n'
      << "stack_train_auc\t" << format_double(rep.stack_train_auc) << '\n'
      << "heldout_pairs\t" << ev.pairs << '\n'
      << "heldout_positive_pairs\t" << ev.positive_pairs << '\n'
      << "heldout_stacked_auc\t" << format_double(ev.stacked_auc) << '\n';
    for (Layer l : kAllLayers) s << "heldout_weak_" << layer_name(l) << "_auc\t" << format_double(ev.weak_auc[layer_index(l)]) << '\n';
    s << "heldout_best_weak_auc\t" << format_double(ev.best_weak_auc) << '\n'
      << "heldout_player_auc\t" << format_double(ev.player_auc) << '\n';
    out.commit();
    log << "train: held-out edge AUC " << fmt_fixed(ev.stacked_auc) << " (best single layer " << fmt_fixed(ev.best_weak_auc)
        << ") on " << ev.pairs << " pairs -> " << at.model().string() << '\n';
}

inline std::map<std::string, std::string> read_train_summary(const RunConfig& cfg) {
    const Layout at{cfg.out_dir};
    return read_artifact(at.train_summary(), sim_header(cfg, "train-summary"), [](std::istream& in) {
        std::map<std::string, std::string> m;
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto f = split_tabs(line);
            if (f.size() != 2) throw std::invalid_argument("expected metric and value: " + line);
            m[std::string(f[0])] = std::string(f[1]);
        }
        return m;
    });
}

// ============================================================================
// TRIAL
// ============================================================================

inline void trial(const RunConfig& cfg, std::ostream& log) {
    const Layout at{cfg.out_dir};
    const RiskModel model =
        read_artifact(at.model(), sim_header(cfg, "model"), [](std::istream& in) { return load_risk_model(in); });
    // The closed loop continues the simulation itself, so the world is
    // regenerated from the config and checked against the simulate outputs.
    WorldState world = simulate_pretrial(cfg);
    const auto events = read_artifact(at.events(), sim_header(cfg, "events"), rest_of);
    if (events != event_file_text(world.log))
        throw InputError(at.events().string() + ": does not match the simulation for this config");
    const auto players = read_artifact(at.players(), sim_header(cfg, "players"), rest_of);
    if (players != players_text(world.players))
        throw InputError(at.players().string() + ": does not match the simulation for this config");

    const TrialRun run = run_trial(std::move(world), model, cfg);

    OutputSet out;
    write_event_file(out.open(at.trial_events(), trial_header(cfg, "trial-events")), run.world.log);
    write_players(out.open(at.trial_players(), trial_header(cfg, "trial-players")), run.world.players);
    write_ledger(out.open(at.ledger(), trial_header(cfg, "ledger")), run.ledger);
    auto& s = out.open(at.trial_summary(), trial_header(cfg, "trial-summary"));
    s << "day\tviolator_candidates\tvictim_candidates\tlisted\tmessaged\n";
    for (const auto& d : run.days)
        s << d.day << '\t' << d.violator_candidates << '\t' << d.victim_candidates << '\t' << d.listed << '\t' << d.messaged
          << '\n';
    auto& r = out.open(at.risk_scores(), trial_header(cfg, "risk-scores"));
    const auto& a = run.first_assessment;
    r << "# day=" << a.day << '\n' << "player_id\tviolator\tvictim\n";
    for (std::size_t p = 0; p < a.violator.size(); ++p)
        if (a.violator[p] > 0.0 || a.victim[p] > 0.0)
            r << p << '\t' << format_double(a.violator[p]) << '\t' << format_double(a.victim[p]) << '\n';
    out.commit();
    log << "trial: " << run.days.size() << " days, " << run.ledger.records().size() << " listings, "
        << run.ledger.dispatch_count() << " messages; simulated through day " << run.world.log.covered_days() - 1 << " -> "
        << at.ledger().string() << '\n';
}

// ============================================================================
// ANALYZE / REPORT
// ============================================================================

inline void analyze(const RunConfig& cfg, std::ostream& log) {
    const Layout at{cfg.out_dir};
    const auto events = read_artifact(at.trial_events(), trial_header(cfg, "trial-events"), read_event_file);
    const auto players =
        read_artifact(at.trial_players(), trial_header(cfg, "trial-players"), [](std::istream& in) { return read_players(in); });
    const auto ledger = read_artifact(at.ledger(), trial_header(cfg, "ledger"), [](std::istream& in) { return read_ledger(in); });
    if (ledger.trial_seed() != cfg.trial.seed) throw InputError(at.ledger().string() + ": trial seed does not match the config");
    for (const auto& rec : ledger.records())
        if (rec.player >= players.size()) throw InputError(at.ledger().string() + ": listing for an unknown player");

    const auto rep = analyze_trial(events, players, ledger, cfg.analysis);
    OutputSet out;
    write_effects_tsv(out.open(at.effects(), trial_header(cfg, "effects")), rep);
    write_night_tsv(out.open(at.night(), trial_header(cfg, "night")), rep);
    write_balance_tsv(out.open(at.balance(), trial_header(cfg, "balance")), rep);
    out.commit();
    const auto sig = count_significant(rep);
    log << "analyze: " << sig.cells << " cells, " << sig.significant << " with p < 0.05 -> " << at.effects().string() << '\n';
}

inline EffectReport read_report(const RunConfig& cfg) {
    const Layout at{cfg.out_dir};
    const auto effects = read_artifact(at.effects(), trial_header(cfg, "effects"), rest_of);
    const auto night = read_artifact(at.night(), trial_header(cfg, "night"), rest_of);
    const auto balance = read_artifact(at.balance(), trial_header(cfg, "balance"), rest_of);
    std::istringstream e(effects), n(night), b(balance);
    try {
        return read_report_tables(e, n, b);
    } catch (const std::exception& ex) {
        throw InputError("analysis tables in " + at.dir.string() + ": " + ex.what());
    }
}

inline void report(const RunConfig& cfg, std::ostream& log) {
    const Layout at{cfg.out_dir};
    const auto rep = read_report(cfg);
    OutputSet out;
    write_report_text(out.open(at.report(), trial_header(cfg, "report")), rep);
    out.commit();
    log << "report: -> " << at.report().string() << '\n';
}

// ============================================================================
// DISPATCH
// ============================================================================

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"simulate", "train", "trial", "analyze", "report"};
    return n;
}

inline void run(const std::string& command, const RunConfig& cfg, std::ostream& log) {
    if (command == "simulate") simulate(cfg, log);
    else if (command == "train") train(cfg, log);
    else if (command == "trial") trial(cfg, log);
    else if (command == "analyze") analyze(cfg, log);
    else if (command == "report") report(cfg, log);
    else throw std::invalid_argument("unknown command: " + command);
}

}  // namespace guardian::commands
