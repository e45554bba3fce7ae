#include <cstdio>
#include <sys/wait.h>

#include "doctest.h"
#include "earshot/dialogue.hpp"
#include "earshot/train_export.hpp"
#include "json.hpp"
#include "test_util.hpp"

using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Run cli(const std::string& args) {
  Run r;
  const std::string cmd = std::string(EARSHOT_CLI) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int raw = ::pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::size_t count_lines(const std::filesystem::path& p) {
  auto s = testutil::read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fixtures, stats, replay, eval and train-export chain together") {
    auto dir = testutil::scratch("cli");
    const auto corpus = (dir / "c.jsonl").string();
    const auto mem = (dir / "m.jsonl").string();
    auto f = cli("fixtures -n 10 --seed 7 --out " + corpus + " --memories " + mem);
    REQUIRE(f.status == 0);
    CHECK(count_lines(corpus) == 10);
    CHECK(count_lines(mem) == 10);
    auto dialogues = earshot::read_corpus(corpus);
    std::size_t whispers = 0;
    for (const auto& d : dialogues) whispers += earshot::assist_positions(d).size();

    auto s = cli("stats --corpus " + corpus);
    REQUIRE(s.status == 0);
    auto stats = json::parse(s.out);
    CHECK(stats["# dialogues"] == 10);
    CHECK(stats["Assistant Turns"]["n"] == 10);

    const auto traces = (dir / "tr.jsonl").string();
    auto r = cli("replay --corpus " + corpus + " --memories " + mem +
                 " --trigger oracle --responder oracle --out " + traces);
    REQUIRE(r.status == 0);
    CHECK(count_lines(traces) == 10);

    const auto report = (dir / "report.json").string();
    auto e = cli("eval --traces " + traces + " --truth " + corpus + " --out " + report);
    REQUIRE(e.status == 0);
    auto rep = json::parse(testutil::read_file(report));
    CHECK(rep["Hard Precision"] == 1.0);
    CHECK(rep["Hard Recall"] == 1.0);
    CHECK(rep["Soft Accuracy"] == 1.0);
    CHECK(rep["hard"]["tp"] == whispers);

    const auto ex = (dir / "x.jsonl").string();
    const auto tl = (dir / "t.jsonl").string();
    auto t = cli("train-export --corpus " + corpus + " --out " + ex + " --trigger-out " + tl + " --seed 1");
    REQUIRE(t.status == 0);
    auto examples = earshot::read_examples(ex);
    std::size_t pos = 0;
    for (const auto& x : examples) pos += x.positive;
    CHECK(pos == whispers);
    CHECK(count_lines(tl) > 0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("cost prints the reduction and the sweep") {
    auto c = cli("cost --json");
    REQUIRE(c.status == 0);
    auto j = json::parse(c.out);
    CHECK(j["report"]["reduction"].get<double>() >= 0.64);
    // Five frequencies by three prefills, under both single-model policies.
    CHECK(j["sweep"].size() == 30);
    auto plain = cli("cost --frequency 0.2");
    REQUIRE(plain.status == 0);
    CHECK(plain.out.find("reduction") != std::string::npos);
    CHECK(cli("cost --frequency 1.5").status != 0);
    auto alt = json::parse(cli("cost --json --policy decode-on-responses").out);
    CHECK(alt["model"]["single_policy"] == "decode-on-responses");
    CHECK(alt["report"]["reduction"].get<double>() < j["report"]["reduction"].get<double>());
    CHECK(cli("cost --policy sometimes").status != 0);
  }

  TEST_CASE("memory import and export") {
    auto dir = testutil::scratch("climem");
    const auto store = (dir / "s.jsonl").string();
    auto imp = cli("memory import --store " + store + " --id xm --file " + testutil::fixture("xiao_ming_memory.txt").string());
    REQUIRE(imp.status == 0);
    auto list = cli("memory list --store " + store);
    CHECK(list.out.find("xm") != std::string::npos);
    auto ex = cli("memory export --store " + store + " --id xm --json");
    REQUIRE(ex.status == 0);
    CHECK(json::parse(ex.out)["events"].size() == 2);
    CHECK(cli("memory export --store " + store + " --id nope").status != 0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("reformat renders the stream") {
    auto r = cli("reformat --stream --in " + testutil::fixture("cocos_scenario.txt").string());
    REQUIRE(r.status == 0);
    CHECK(r.out.find("(Agent: Cocos Islands)") != std::string::npos);
  }

  TEST_CASE("errors exit non-zero with a message") {
    auto r = cli("stats --corpus /nonexistent/c.jsonl");
    CHECK(r.status != 0);
    CHECK(r.out.find("Io") != std::string::npos);
    CHECK(cli("").status != 0);
    CHECK(cli("replay --corpus /nonexistent --trigger bogus").status != 0);
  }
}
