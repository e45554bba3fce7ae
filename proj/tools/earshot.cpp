// Command-line front end: dataset generation, replay, export, evaluation,
// cost simulation and the live session server.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "earshot/chat_client.hpp"
#include "earshot/cost_model.hpp"
#include "earshot/datagen.hpp"
#include "earshot/error.hpp"
#include "earshot/judge.hpp"
#include "earshot/memory.hpp"
#include "earshot/metrics.hpp"
#include "earshot/orchestrator.hpp"
#include "earshot/service/server.hpp"
#include "earshot/standin.hpp"
#include "earshot/text.hpp"
#include "earshot/train_export.hpp"
#include "earshot/transcript.hpp"

namespace fs = std::filesystem;
using namespace earshot;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << s;
}

std::shared_ptr<ChatClient> make_client(const std::string& endpoint, std::uint64_t seed) {
  if (endpoint.empty()) return nullptr;
  if (endpoint == "fixture") return std::make_shared<ScriptedChatClient>(standin_generation_handler(seed));
  HttpChatConfig cfg;
  cfg.endpoint = endpoint;
  return std::make_shared<HttpChatClient>(cfg);
}

std::vector<RunTrace> read_traces(const fs::path& p) {
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  std::vector<RunTrace> out;
  for (const auto& f : files) {
    std::istringstream in(read_text(f));
    std::string line;
    while (std::getline(in, line)) {
      if (!text::trim(line).empty()) out.push_back(nlohmann::json::parse(line).get<RunTrace>());
    }
  }
  return out;
}

MemorySource parse_source(const std::string& s) { return memory_source_from_string(s); }

struct GenerateArgs {
  std::size_t n = 10;
  std::uint64_t seed = 1;
  std::string source = "keywords";
  std::string endpoint = "fixture";
  std::string model = "default";
  std::string out = "corpus.jsonl";
  std::string memories = "memories.jsonl";
  double ignore_probability = 0.5;
  bool keep_invalid = false;
};

int cmd_generate(const GenerateArgs& a) {
  auto client = make_client(a.endpoint, a.seed);
  if (!client) throw Error(ErrorCode::InvalidArgument, "generate needs --endpoint (URL or 'fixture')");
  auto corpora = SourceCorpora::bundled();
  SamplingWeights w;
  w.ignore_probability = a.ignore_probability;
  GenerationModel model;
  model.model_name = a.model;
  MemoryStore store(a.memories);
  std::vector<Dialogue> corpus;
  std::size_t rejected = 0;
  const char* sources[] = {"keywords", "soda", "perltqa"};
  for (std::size_t i = 0; i < a.n; ++i) {
    const std::uint64_t seed = a.seed * 1000003ULL + i;
    const MemorySource src = parse_source(a.source == "mixed" ? sources[i % 3] : a.source);
    char id[32];
    std::snprintf(id, sizeof id, "gen_%05zu", i);
    try {
      auto spec = sample_spec(src, seed, corpora, w);
      auto memory = generate_memory(spec, *client, corpora, std::string("mem_") + id, model);
      auto raw = generate_dialogue(memory, spec, *client, model);
      auto res = reformat(raw, StreamConfig{}, seed);
      auto report = validate_dialogue(res.dialogue);
      if (!report.pass && !a.keep_invalid) {
        ++rejected;
        std::cerr << id << ": rejected (" << report.messages.size() << " issues)\n";
        continue;
      }
      res.dialogue.id = id;
      res.dialogue.memory_id = memory.memory_id;
      res.dialogue.source = src == MemorySource::Keywords ? DialogueSource::Synthetic
                            : src == MemorySource::SodaContext ? DialogueSource::Soda
                                                               : DialogueSource::Perltqa;
      store.replace(memory);
      corpus.push_back(std::move(res.dialogue));
    } catch (const Error& e) {
      ++rejected;
      std::cerr << id << ": " << to_string(e.code()) << ": " << e.what() << "\n";
    }
  }
  write_corpus(a.out, corpus);
  std::cout << "generated " << corpus.size() << " dialogues (" << rejected << " rejected) -> " << a.out << "\n";
  return 0;
}

struct ReplayArgs {
  std::string corpus;
  std::string memories;
  std::string trigger = "oracle";
  std::string responder = "oracle";
  std::string endpoint;
  std::string model = "default";
  bool history_aware = true;
  double threshold = 0.5;
  double speed = 0;  // 0 = unpaced
  bool manual_truth = false;
  std::string out = "traces.jsonl";
};

int cmd_replay(const ReplayArgs& a) {
  auto corpus = read_corpus(a.corpus);
  std::optional<MemoryStore> store;
  if (!a.memories.empty()) store.emplace(a.memories);
  BackendSetup base;
  base.trigger = backend_kind_from_string(a.trigger);
  base.responder = backend_kind_from_string(a.responder);
  base.client = make_client(a.endpoint, 0);
  base.remote.model_name = a.model;
  SessionConfig cfg;
  cfg.history_aware = a.history_aware;
  cfg.trigger_threshold = a.threshold;
  cfg.manual_mode = a.manual_truth;
  std::ofstream out(a.out);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + a.out);
  std::size_t fired = 0, whispers = 0;
  for (const auto& d : corpus) {
    BackendSetup b = base;
    b.script = OracleScript::from_dialogue(d);
    std::optional<Memory> memory;
    if (store && d.memory_id) memory = store->find(*d.memory_id);
    std::shared_ptr<Clock> clock;
    if (a.speed <= 0) clock = std::make_shared<VirtualClock>();
    Session s(make_trigger(b, cfg), make_responder(b, cfg), cfg, memory, clock);
    ReplayOptions opts;
    if (a.speed > 0) opts.speed = a.speed;
    if (a.manual_truth) opts.manual_turns = b.script->fire_at;
    auto trace = replay(d, s, opts);
    fired += trace.fired;
    whispers += trace.predicted_turns.size();
    out << nlohmann::json(trace).dump() << "\n";
  }
  std::cout << "replayed " << corpus.size() << " dialogues: " << fired << " trigger fires, " << whispers
            << " whisper turns -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string traces;
  std::string truth;
  std::string judge_endpoint;
  std::string judge_model = "judge";
  std::size_t judge_concurrency = 4;
  bool principles = true;
  int window = 1;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  auto traces = read_traces(a.traces);
  auto truth = read_corpus(a.truth);
  auto report = evaluate_traces(traces, truth, a.window);
  if (!a.judge_endpoint.empty()) {
    std::map<std::string, const Dialogue*> by_id;
    for (const auto& d : truth) by_id[d.id] = &d;
    std::vector<Dialogue> judged_input;
    for (const auto& t : traces) {
      if (auto it = by_id.find(t.dialogue_id); it != by_id.end()) judged_input.push_back(apply_trace(*it->second, t));
    }
    auto client = make_client(a.judge_endpoint, 0);
    JudgeConfig jc;
    jc.model_name = a.judge_model;
    jc.max_concurrency = a.judge_concurrency;
    add_judge_scores(report, judge_corpus(judged_input, *client, jc, a.principles));
  }
  auto j = to_json(report);
  if (a.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text(a.out, j.dump(2) + "\n");
    std::cout << "hard P/R/A " << report.hard.precision << " / " << report.hard.recall << " / " << report.hard.accuracy
              << ", soft P/R/A " << report.soft.precision << " / " << report.soft.recall << " / "
              << report.soft.accuracy << " -> " << a.out << "\n";
  }
  return 0;
}

struct ExportArgs {
  std::string corpus;
  std::string out = "responder.jsonl";
  std::string trigger_out;
  double negative_fraction = 0.25;
  std::uint64_t seed = 0;
  bool augment = false;
};

int cmd_train_export(const ExportArgs& a) {
  auto corpus = read_corpus(a.corpus);
  ResponderExportConfig cfg;
  cfg.negative_fraction = a.negative_fraction;
  cfg.seed = a.seed;
  if (a.augment) {
    AugmentConfig aug;
    aug.rng_seed = a.seed;
    cfg.augment = aug;
  }
  auto res = build_responder_examples(corpus, cfg);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  write_examples(a.out, res.examples);
  std::cout << res.positives << " positive, " << res.negatives << " negative examples -> " << a.out << "\n";
  if (!a.trigger_out.empty()) {
    auto labels = build_trigger_labels(corpus);
    write_trigger_labels(a.trigger_out, labels);
    std::cout << labels.size() << " trigger labels -> " << a.trigger_out << "\n";
  }
  return 0;
}

struct ServeArgs {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;
  std::string trigger = "heuristic";
  std::string responder = "heuristic";
  std::string endpoint;
  std::string model = "default";
  std::string oracle_fixture;
  std::string memory_store;
};

int cmd_serve(const ServeArgs& a) {
  service::ServiceOptions opts;
  opts.backends.trigger = backend_kind_from_string(a.trigger);
  opts.backends.responder = backend_kind_from_string(a.responder);
  opts.backends.client = make_client(a.endpoint, 0);
  opts.backends.remote.model_name = a.model;
  if (!a.oracle_fixture.empty()) {
    opts.backends.script = nlohmann::json::parse(read_text(a.oracle_fixture)).get<OracleScript>();
  }
  opts.memories = std::make_shared<MemoryStore>(a.memory_store);
  service::SessionManager mgr(opts);
  service::Server server(mgr, {a.address, a.port, 2});
  auto port = server.start();
  std::cout << "listening on http://" << a.address << ":" << port << " (trigger " << a.trigger << ", responder "
            << a.responder << ")" << std::endl;
  server.wait_for_signal();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"earshot: proactive whisper assistance toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic dialogue corpus through a chat endpoint");
  g->add_option("-n,--count", gen.n, "Dialogues to generate");
  g->add_option("--seed", gen.seed, "Sampling seed");
  g->add_option("--source", gen.source, "Memory source")->check(CLI::IsMember({"keywords", "soda", "perltqa", "mixed"}));
  g->add_option("--endpoint", gen.endpoint, "Chat endpoint base URL, or 'fixture' for the offline stand-in");
  g->add_option("--model", gen.model, "Model name sent to the endpoint");
  g->add_option("--out", gen.out, "Corpus JSONL output");
  g->add_option("--memories", gen.memories, "Memory store JSONL");
  g->add_option("--ignore-probability", gen.ignore_probability, "Probability of the 'user ignores help' instruction");
  g->add_flag("--keep-invalid", gen.keep_invalid, "Keep dialogues that fail validation");

  auto* mem = app.add_subcommand("memory", "Memory store maintenance");
  mem->require_subcommand(1);
  std::string mem_store = "memories.jsonl", mem_file, mem_id, mem_source = "keywords";
  bool mem_json = false;
  auto* mi = mem->add_subcommand("import", "Import a 'Memory: / Event N:' text file");
  mi->add_option("--store", mem_store);
  mi->add_option("--file", mem_file)->required();
  mi->add_option("--id", mem_id)->required();
  mi->add_option("--source", mem_source);
  auto* me = mem->add_subcommand("export", "Print a memory as text (or JSON)");
  me->add_option("--store", mem_store);
  me->add_option("--id", mem_id)->required();
  me->add_flag("--json", mem_json);
  auto* ml = mem->add_subcommand("list", "List memory ids");
  ml->add_option("--store", mem_store);

  std::string ref_in, ref_out;
  std::uint64_t ref_seed = 0;
  bool ref_stream = false;
  auto* rf = app.add_subcommand("reformat", "Parse a raw transcript into a timed dialogue and token stream");
  rf->add_option("--in", ref_in)->required();
  rf->add_option("--out", ref_out, "Dialogue JSON output (stdout when omitted)");
  rf->add_option("--seed", ref_seed);
  rf->add_flag("--stream", ref_stream, "Print the rendered token stream");

  std::string stats_corpus;
  auto* st = app.add_subcommand("stats", "Dataset statistics for a corpus");
  st->add_option("--corpus", stats_corpus)->required();

  ReplayArgs rep;
  auto* rp = app.add_subcommand("replay", "Stream a corpus through the dual-model pipeline and record traces");
  rp->add_option("--corpus", rep.corpus)->required();
  rp->add_option("--memories", rep.memories);
  rp->add_option("--trigger", rep.trigger)->check(CLI::IsMember({"oracle", "heuristic", "remote"}));
  rp->add_option("--responder", rep.responder)->check(CLI::IsMember({"oracle", "heuristic", "remote"}));
  rp->add_option("--endpoint", rep.endpoint, "Chat endpoint for remote backends");
  rp->add_option("--model", rep.model);
  rp->add_option("--history-aware", rep.history_aware);
  rp->add_option("--threshold", rep.threshold);
  rp->add_option("--speed", rep.speed, "Wall-clock pacing factor; 0 replays unpaced on a virtual clock");
  rp->add_flag("--manual-truth", rep.manual_truth, "Call the responder at ground-truth positions only");
  rp->add_option("--out", rep.out);

  ExportArgs ex;
  auto* te = app.add_subcommand("train-export", "Export responder and trigger training examples");
  te->add_option("--corpus", ex.corpus)->required();
  te->add_option("--out", ex.out);
  te->add_option("--trigger-out", ex.trigger_out, "Per-silence trigger labels JSONL");
  te->add_option("--negative-fraction", ex.negative_fraction);
  te->add_option("--seed", ex.seed);
  te->add_flag("--augment", ex.augment, "Apply dropout/flip/phonetic augmentation");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score traces against ground truth");
  e->add_option("--traces", ev.traces, "Trace JSONL file or directory")->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("--judge-endpoint", ev.judge_endpoint);
  e->add_option("--judge-model", ev.judge_model);
  e->add_option("--judge-concurrency", ev.judge_concurrency);
  e->add_option("--window", ev.window, "Soft matching window in turns");
  e->add_option("--principles", ev.principles, "Also run nine-principle judging");
  e->add_option("--out", ev.out);

  CostModel cm;
  double cost_length = 1000;
  std::vector<double> freqs{0.05, 0.1, 0.14, 0.2, 0.3}, prefills{0, 64, 256};
  bool cost_json = false;
  std::string cost_policy = "decode-every-point";
  auto* c = app.add_subcommand("cost", "Dual- vs single-model processing time and sensitivity sweep");
  c->add_option("--length", cost_length, "Stream length in tokens");
  c->add_option("--small-rate", cm.small_process_rate);
  c->add_option("--generate-rate", cm.large_generate_rate);
  c->add_option("--process-rate", cm.large_process_rate);
  c->add_option("--frequency", cm.response_frequency);
  c->add_option("--avg-response", cm.avg_response_tokens);
  c->add_option("--prefill", cm.window_prefill);
  c->add_option("--tokens-per-point", cm.tokens_per_decision_point);
  c->add_option("--sweep-frequencies", freqs);
  c->add_option("--sweep-prefills", prefills);
  c->add_option("--policy", cost_policy, "Single-model baseline")
      ->check(CLI::IsMember({"decode-every-point", "decode-on-responses"}));
  c->add_flag("--json", cost_json);

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "Run the live session service (HTTP, WebSocket, SSE)");
  s->add_option("--address", sv.address);
  s->add_option("--port", sv.port);
  s->add_option("--trigger", sv.trigger)->check(CLI::IsMember({"oracle", "heuristic", "remote"}));
  s->add_option("--responder", sv.responder)->check(CLI::IsMember({"oracle", "heuristic", "remote"}));
  s->add_option("--endpoint", sv.endpoint, "Chat endpoint for remote backends (key from $EARSHOT_API_KEY)");
  s->add_option("--model", sv.model);
  s->add_option("--oracle-fixture", sv.oracle_fixture, "Default oracle script JSON for new sessions");
  s->add_option("--memory-store", sv.memory_store, "Memory store JSONL (in-memory when omitted)");

  std::size_t fx_n = 50;
  std::uint64_t fx_seed = 7;
  std::string fx_out = "fixture_corpus.jsonl", fx_mem = "fixture_memories.jsonl";
  auto* fx = app.add_subcommand("fixtures", "Write the offline stand-in corpus and memories");
  fx->add_option("-n,--count", fx_n);
  fx->add_option("--seed", fx_seed);
  fx->add_option("--out", fx_out);
  fx->add_option("--memories", fx_mem);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (mi->parsed()) {
      MemoryStore store(mem_store);
      auto m = parse_memory_text(read_text(mem_file), mem_id, memory_source_from_string(mem_source));
      for (const auto& w : memory_warnings(m)) std::cerr << "warning: " << w << "\n";
      store.replace(m);
      std::cout << "imported " << mem_id << " -> " << mem_store << "\n";
      return 0;
    }
    if (me->parsed()) {
      MemoryStore store(mem_store);
      auto m = store.get(mem_id);
      std::cout << (mem_json ? nlohmann::json(m).dump(2) : render_memory_text(m)) << "\n";
      return 0;
    }
    if (ml->parsed()) {
      MemoryStore store(mem_store);
      for (const auto& id : store.list()) std::cout << id << "\n";
      return 0;
    }
    if (rf->parsed()) {
      auto res = reformat(read_text(ref_in), StreamConfig{}, ref_seed);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
      auto j = nlohmann::json(res.dialogue).dump(2);
      if (ref_out.empty()) {
        std::cout << j << "\n";
      } else {
        write_text(ref_out, j + "\n");
      }
      if (ref_stream) std::cout << render_stream(res.tokens) << "\n";
      return 0;
    }
    if (st->parsed()) {
      auto corpus = read_corpus(stats_corpus);
      std::cout << to_json(dataset_stats(corpus)).dump(2) << "\n";
      return 0;
    }
    if (rp->parsed()) return cmd_replay(rep);
    if (te->parsed()) return cmd_train_export(ex);
    if (e->parsed()) return cmd_eval(ev);
    if (c->parsed()) {
      cm.single_policy = single_policy_from_string(cost_policy);
      auto report = simulate_cost(cost_length, cm);
      auto rows = cost_sweep(cost_length, cm, freqs, prefills);
      if (cost_json) {
        nlohmann::json j{{"model", cm}, {"report", report}, {"sweep", nlohmann::json::array()}};
        for (const auto& r : rows) {
          j["sweep"].push_back({{"policy", std::string(to_string(r.policy))},
                                {"response_frequency", r.response_frequency},
                                {"window_prefill", r.window_prefill},
                                {"report", r.report}});
        }
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("reduction %.4f (dual %.2f s, single %.2f s, policy %s)\n\n", report.reduction,
                    report.dual_seconds, report.single_seconds, std::string(to_string(cm.single_policy)).c_str());
        std::cout << format_sweep(rows);
      }
      return 0;
    }
    if (s->parsed()) return cmd_serve(sv);
    if (fx->parsed()) {
      auto samples = standin_corpus(fx_n, fx_seed);
      std::vector<Dialogue> corpus;
      MemoryStore store(fx_mem);
      for (auto& smp : samples) {
        store.replace(smp.memory);
        corpus.push_back(std::move(smp.dialogue));
      }
      write_corpus(fx_out, corpus);
      std::cout << corpus.size() << " dialogues -> " << fx_out << ", memories -> " << fx_mem << "\n";
      return 0;
    }
  } catch (const Error& err) {
    std::cerr << "error [" << to_string(err.code()) << "]: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
