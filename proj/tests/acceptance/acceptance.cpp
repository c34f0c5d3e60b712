// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.
//
//   acceptance [--only 1,3] [--work DIR]

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "csr/csr_gnn.hpp"
#include "csr/eval.hpp"
#include "csr/model.hpp"
#include "csr/synthetic.hpp"
#include "csr/task.hpp"

namespace fs = std::filesystem;
using namespace csr;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
    char b[64];
    std::snprintf(b, sizeof b, f, a);
    return b;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "csr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    const int code = csr::cli::run(static_cast<int>(argv.size()), argv.data(), out, std::cerr);
    if (code != 0) std::cerr << "csr " << args[1] << " exited " << code << '\n';
    return code;
}

fs::path fresh(const std::string& name) {
    auto p = g_work / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// ------------------------------------------------------------ criteria 1-2

// Fresh corpus seed: not used by any tuning run.
constexpr const char* kOptSeed = "2718";

struct OptOutcome {
    bool ran = false;
    double support_iou = 0, evidence_iou = 0, minutes = 0;
};

OptOutcome run_opt() {
    OptOutcome r;
    auto corpus = fresh("opt_corpus"), out = fresh("opt_run");
    if (cli({"synth-gen", "--seed", kOptSeed, "--n_tasks", "50", "--out", corpus.string()}) != 0) return r;
    const auto t0 = Clock::now();
    if (cli({"opt-run", "--seed", kOptSeed, "--synthetic", corpus.string(), "--out", out.string()}) != 0) return r;
    r.minutes = seconds_since(t0) / 60.0;
    auto m = read_json(out / "metrics.json");
    r.support_iou = m["support_iou"];
    r.evidence_iou = m["evidence_iou"];
    r.ran = true;
    return r;
}

// ------------------------------------------------------------ criteria 3-4

struct GnnOutcome {
    bool ran = false;
    double support_iou = 0, evidence_iou = 0, auc = 0, minutes = 0;
};

// Two stages at d_hid = 64: reconstruction only, then mask supervision from those weights.
const std::vector<std::string> kGnnModel{"--hidden_dim", "64", "--num_layers", "1", "--relation_dim", "32",
                                         "--learning_rate", "1e-2", "--batch_size", "8", "--lambda2", "0"};
const std::vector<std::string> kGnnStage1{"--lambda1", "1", "--supervised_weight", "0", "--epochs", "32000"};
const std::vector<std::string> kGnnStage2{"--lambda1", "0", "--supervised_weight", "1", "--epochs", "28000"};

GnnOutcome run_gnn() {
    GnnOutcome r;
    auto train_dir = fresh("gnn_train_corpus"), held = fresh("gnn_heldout");
    auto stage1 = fresh("gnn_stage1"), out = fresh("gnn_stage2");
    if (cli({"synth-gen", "--seed", "31", "--n_tasks", "20000", "--out", train_dir.string()}) != 0) return r;
    if (cli({"synth-gen", "--seed", "32", "--n_tasks", "50", "--out", held.string()}) != 0) return r;
    auto stage = [&](const fs::path& dir, const std::vector<std::string>& extra, std::vector<std::string> more) {
        std::vector<std::string> args{"pretrain", "--seed", "33", "--synthetic", train_dir.string(), "--out",
                                      dir.string()};
        args.insert(args.end(), kGnnModel.begin(), kGnnModel.end());
        args.insert(args.end(), extra.begin(), extra.end());
        args.insert(args.end(), more.begin(), more.end());
        return cli(args) == 0;
    };
    const auto t0 = Clock::now();
    if (!stage(stage1, kGnnStage1, {})) return r;
    if (!stage(out, kGnnStage2, {"--init", (stage1 / "final.ckpt").string()})) return r;
    r.minutes = seconds_since(t0) / 60.0;

    const auto params = load_checkpoint(out / "final.ckpt");
    const int iters = read_json(out / "manifest.json")["config"]["train"]["proposal_iters"];
    GnnMaskModel model(params);
    double sup = 0, ev = 0;
    std::size_t n_sup = 0, n_ev = 0;
    std::vector<double> pos, neg;
    for (const auto& f : list_task_files(held)) {
        auto task = read_synthetic_task(f);
        std::vector<ContextGraph> graphs;
        for (const auto& s : task.supports) graphs.push_back(s.graph);
        auto prop = propose(model, graphs, iters);
        for (std::size_t i = 0; i < graphs.size(); ++i, ++n_sup) sup += iou(prop.masks[i], task.supports[i].truth);
        for (const auto& q : task.queries) {
            auto s = score_query(model, prop, q.graph);
            if (q.positive) {
                ev += iou(s.evidence, q.truth);
                ++n_ev;
                pos.push_back(s.score);
            } else {
                neg.push_back(s.score);
            }
        }
    }
    r.support_iou = sup / static_cast<double>(n_sup);
    r.evidence_iou = ev / static_cast<double>(n_ev);
    r.auc = roc_auc(pos, neg);
    r.ran = true;
    return r;
}

// ------------------------------------------------------------ criterion 5

// Mean 1-based position of the positive's tie block after sorting.
double sorted_rank(std::vector<double> s) {
    const double p = s[0];
    std::sort(s.begin(), s.end(), std::greater<>());
    std::size_t first = std::find(s.begin(), s.end(), p) - s.begin();
    std::size_t last = first;
    while (last + 1 < s.size() && s[last + 1] == p) ++last;
    return 0.5 * static_cast<double>(first + last + 2);
}

Verdict criterion_nell() {
    const fs::path data = CSR_TEST_DATA;
    const auto kg_path = data / "nell_mini.tsv";
    std::size_t lines = 0;
    {
        std::ifstream in(kg_path);
        for (std::string l; std::getline(in, l);) lines += !l.empty();
    }
    auto out = fresh("nell_eval");
    if (cli({"evaluate", "--kg", kg_path.string(), "--tasks", (data / "nell_tasks").string(), "--scorer", "opt",
             "--max_steps", "100", "--out", out.string()}) != 0)
        return {false, "evaluate failed"};
    auto rep = read_json(out / "report.json");
    double mrr = 0, h1 = 0, h5 = 0, h10 = 0, worst = 0;
    std::size_t n = 0;
    bool sized = true;
    for (const auto& rec : rep["records"]) {
        auto scores = rec["scores"].get<std::vector<double>>();
        sized = sized && scores.size() == 51;
        const double rank = sorted_rank(scores);
        worst = std::max(worst, std::abs(rank - rec["rank"].get<double>()));
        mrr += 1.0 / rank;
        h1 += rank <= 1;
        h5 += rank <= 5;
        h10 += rank <= 10;
        ++n;
    }
    const double dn = static_cast<double>(n);
    const double diff = std::max({std::abs(mrr / dn - rep["mrr"].get<double>()),
                                  std::abs(h1 / dn - rep["hits@1"].get<double>()),
                                  std::abs(h5 / dn - rep["hits@5"].get<double>()),
                                  std::abs(h10 / dn - rep["hits@10"].get<double>()), worst});
    Verdict v;
    v.pass = lines <= 5000 && n == 40 && sized && rep["skipped_tasks"] == 0 && diff < 1e-12;
    v.detail = std::to_string(lines) + " triplets, " + std::to_string(n) + " queries, MRR " +
               fmt("%.4f", rep["mrr"].get<double>()) + " H@10 " + fmt("%.4f", rep["hits@10"].get<double>()) +
               ", max deviation from the rank oracle " + fmt("%.1e", diff);
    return v;
}

// ------------------------------------------------------------ criterion 6

struct Property {
    const char* binary;
    const char* test_case;
};

const Property kProperties[] = {
    {"test_gnn", "zero mask equals deleting every edge"},
    {"test_gnn", "zero-weight edges vanish"},
    {"test_gnn", "encode is invariant to node and edge permutation"},
    {"test_csr_opt", "connectivity equals a BFS oracle on every binary mask"},
    {"test_csr_opt", "entropy values"},
    {"test_csr_gnn", "one proposal iteration is the elementwise min over all decodes"},
    {"test_gnn", "mask gradient of cosine matches central differences"},
    {"test_gnn", "parameter gradients of the decoder match central differences"},
    {"test_autodiff", "*"},
    {"test_csr_opt", "connectivity gradient matches differences"},
    {"test_csr_gnn", "pretraining loss gradients match differences"},
    {"test_train", "example gradients match differences"},
    {"test_eval", "rank_metrics agrees with sort-based ranking"},
    {"test_eval", "random scorer MRR matches the uniform-rank expectation"},
};

Verdict criterion_properties() {
    const fs::path dir = CSR_UNIT_DIR;
    std::size_t passed = 0;
    std::string failed;
    for (const auto& p : kProperties) {
        const auto bin = dir / p.binary;
        const std::string cmd =
            "\"" + bin.string() + "\" --test-case=\"" + p.test_case + "\" --no-intro=true --minimal=true > /dev/null 2>&1";
        if (fs::exists(bin) && std::system(cmd.c_str()) == 0) {
            ++passed;
        } else {
            failed += std::string(failed.empty() ? "" : "; ") + p.binary + ": " + p.test_case;
        }
    }
    const std::size_t total = std::size(kProperties);
    return {passed == total,
            std::to_string(passed) + "/" + std::to_string(total) + " property groups" +
                (failed.empty() ? "" : " (failed: " + failed + ")")};
}

// ------------------------------------------------------------ criterion 7

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return files;
}

Verdict criterion_determinism() {
    const fs::path data = CSR_TEST_DATA;
    const auto kg = (data / "nell_mini.tsv").string();
    const auto tasks = (data / "nell_tasks").string();
    const auto corpus = fresh("det_corpus");
    if (cli({"synth-gen", "--n_tasks", "4", "--seed", "5", "--out", corpus.string()}) != 0)
        return {false, "synth-gen failed"};
    const std::vector<std::string> small{"--hidden_dim", "16", "--relation_dim", "8", "--classifier_hidden", "16"};
    auto join = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    const auto ckpt = g_work / "det_pretrain_kg_a" / "final.ckpt";
    const auto masks = g_work / "det_opt_synth_a" / "masks";
    // Later runs read outputs of earlier ones.
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
        {"synth_gen", {"synth-gen", "--n_tasks", "4"}},
        {"opt_synth", join({"opt-run", "--synthetic", corpus.string(), "--max_steps", "60", "--trace"}, small)},
        {"opt_kg", join({"opt-run", "--kg", kg, "--tasks", tasks, "--max_steps", "20", "--n_negatives", "10"}, small)},
        {"pretrain_syn", join({"pretrain", "--synthetic", corpus.string(), "--epochs", "5", "--supervised_weight", "1",
                               "--finetune", "true", "--learning_rate", "1e-3"},
                              small)},
        {"pretrain_kg", join({"pretrain", "--kg", kg, "--epochs", "5", "--learning_rate", "1e-3"}, small)},
        {"evaluate_gnn", {"evaluate", "--kg", kg, "--tasks", tasks, "--scorer", "gnn", "--checkpoint", ckpt.string()}},
        {"evaluate_random", {"evaluate", "--kg", kg, "--tasks", tasks, "--scorer", "random", "--inductive"}},
        {"dump_masks", {"dump-masks", "--input", masks.string(), "--threshold", "0.5"}},
    };
    std::size_t same = 0;
    std::string bad;
    for (const auto& [name, args] : runs) {
        std::map<std::string, std::string> out[2];
        bool ok = true;
        for (int k = 0; k < 2; ++k) {
            auto dir = fresh("det_" + name + (k ? "_b" : "_a"));
            auto a = args;
            a.insert(a.end(), {"--seed", "9", "--jobs", "1", "--out", dir.string()});
            ok = ok && cli(a) == 0;
            if (ok) out[k] = tree(dir);
        }
        if (ok && !out[0].empty() && out[0] == out[1]) {
            ++same;
        } else {
            bad += (bad.empty() ? "" : ", ") + name;
        }
    }
    return {same == runs.size(), std::to_string(same) + "/" + std::to_string(runs.size()) +
                                     " runs byte-identical" + (bad.empty() ? "" : " (differ: " + bad + ")")};
}

void report(int id, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << v.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance run"};
    std::vector<int> only;
    std::string work = (fs::temp_directory_path() / "csr_acceptance").string();
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);
    g_work = work;
    fs::create_directories(g_work);
    auto want = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

    bool all = true;
    auto emit = [&](int id, const Verdict& v) {
        report(id, v);
        all = all && v.pass;
    };

    if (want(1) || want(2)) {
        auto o = run_opt();
        const std::string when = ", " + fmt("%.1f", o.minutes) + " min";
        if (want(1))
            emit(1, {o.ran && o.support_iou >= 0.75 && o.minutes <= 30.0,
                     "support IOU " + fmt("%.3f", o.support_iou) + " (need >= 0.75) over 50 tasks" + when});
        if (want(2))
            emit(2, {o.ran && o.evidence_iou >= 0.90 && o.minutes <= 30.0,
                     "evidence IOU " + fmt("%.3f", o.evidence_iou) + " (need >= 0.90)" + when});
    }
    if (want(3) || want(4)) {
        auto g = run_gnn();
        const std::string when = ", training " + fmt("%.1f", g.minutes) + " min";
        if (want(3))
            emit(3, {g.ran && g.support_iou >= 0.70 && g.evidence_iou >= 0.90 && g.minutes <= 120.0,
                     "held-out support IOU " + fmt("%.3f", g.support_iou) + " (need >= 0.70), evidence IOU " +
                         fmt("%.3f", g.evidence_iou) + " (need >= 0.90)" + when});
        if (want(4))
            emit(4, {g.ran && g.auc >= 0.9, "held-out AUC " + fmt("%.3f", g.auc) + " (need >= 0.9)"});
    }
    if (want(5)) emit(5, criterion_nell());
    if (want(6)) emit(6, criterion_properties());
    if (want(7)) emit(7, criterion_determinism());
    return all ? 0 : 1;
}
