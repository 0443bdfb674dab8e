#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fv/concrete.hpp"
#include "fv/parser.hpp"
#include "json.hpp"

using namespace fv;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Program load(const std::string& name) {
  std::string path = std::string(FV_SOURCE_DIR) + "/benchmarks/" + name;
  return parse_program(slurp(path), name);
}

Verdict run(const Program& p, long long allocs = 4) {
  RunOpts o;
  o.max_allocs = allocs;
  return run_bounded(p, o);
}

const char* kHeader = R"(node N {
  ptr l [generate];
  ptr n;
  data d;
}

ptr N x, y;
data v;

)";

Verdict run_src(const std::string& body, long long allocs = 4) {
  Program p = parse_program(std::string(kHeader) + body, "inline");
  return run(p, allocs);
}

}  // namespace

TEST_CASE("benchmark corpus verdicts") {
  json m = json::parse(slurp(std::string(FV_SOURCE_DIR) +
                             "/benchmarks/manifest.json"));
  int safe = 0, bad = 0;
  for (auto& e : m["programs"]) {
    std::string f = e["file"];
    INFO("program " << f);
    Verdict v = run(load(f));
    if (e["expect"] == "safe") {
      CHECK(v.kind == Verdict::Safe);
      ++safe;
    } else {
      REQUIRE(v.kind == Verdict::Violation);
      CHECK(v.vkind == e["kind"].get<std::string>());
      CHECK(!v.trace.empty());
      if (v.vkind != "leak") CHECK(v.loc.line > 0);  // the leak check runs at exit
      ++bad;
    }
  }
  CHECK(safe >= 13);
  CHECK(bad == 4);
}

TEST_CASE("list builder stays safe within the allocation bound") {
  // exhausting the allocation budget prunes the branch; it is not an error
  Verdict v = run(load("sll.tl"), 4);
  CHECK(v.kind == Verdict::Safe);
}

TEST_CASE("state budget exhaustion is reported") {
  Program p = load("sll.tl");
  RunOpts o;
  o.max_allocs = 4;
  o.max_states = 10;
  CHECK(run_bounded(p, o).kind == Verdict::BoundExhausted);
}

TEST_CASE("double free") {
  Verdict v = run_src("x := malloc(N);\nfree(x);\nfree(x);\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "double-free");
  CHECK(v.loc.line == 12);  // the second free, after the ten header lines
}

TEST_CASE("use after free") {
  Verdict v = run_src("x := malloc(N);\nfree(x);\ny := x.n;\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "unsafe-access");
}

TEST_CASE("null dereference") {
  Verdict v = run_src("y := x.n;\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "unsafe-access");
}

TEST_CASE("leak at exit") {
  Verdict v = run_src("x := malloc(N);\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "leak");
}

TEST_CASE("dangling pointers may be compared against null only") {
  // freed vs null: allowed
  CHECK(run_src("x := malloc(N);\nfree(x);\n"
                "if (x == null) { skip; } else { skip; }\n")
            .kind == Verdict::Safe);
  // freed vs a live pointer: a violation, on either side
  Verdict v = run_src(
      "x := malloc(N);\ny := malloc(N);\nfree(x);\n"
      "if (x == y) { skip; } else { skip; }\nfree(y);\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "dangling-compare");
  Verdict w = run_src(
      "x := malloc(N);\ny := malloc(N);\nfree(x);\n"
      "if (y != x) { skip; } else { skip; }\nfree(y);\n");
  REQUIRE(w.kind == Verdict::Violation);
  CHECK(w.vkind == "dangling-compare");
  // live vs live: fine
  CHECK(run_src("x := malloc(N);\ny := malloc(N);\n"
                "if (x == y) { skip; } else { skip; }\n"
                "free(x);\nfree(y);\n")
            .kind == Verdict::Safe);
}

TEST_CASE("havocked data ranges over the configured interval") {
  CHECK(run_src("x := malloc(N);\nx.d := havoc;\nv := x.d;\n"
                "assert(v >= 0 - 2);\nassert(v <= 2);\nfree(x);\n")
            .kind == Verdict::Safe);
  Verdict v = run_src(
      "x := malloc(N);\nx.d := havoc;\nv := x.d;\nassert(v <= 1);\nfree(x);\n");
  REQUIRE(v.kind == Verdict::Violation);
  CHECK(v.vkind == "user");
}

TEST_CASE("violation traces replay the executed commands") {
  Verdict v = run_src("x := malloc(N);\nfree(x);\nfree(x);\n");
  REQUIRE(v.kind == Verdict::Violation);
  REQUIRE(!v.trace.empty());
  bool mentions_free = false;
  for (auto& line : v.trace)
    if (line.find("free") != std::string::npos) mentions_free = true;
  CHECK(mentions_free);
}

TEST_CASE("data assertions observe written values") {
  Verdict v = run_src(
      "x := malloc(N);\nx.d := 7;\nv := x.d;\nassert(v == 7);\nfree(x);\n");
  CHECK(v.kind == Verdict::Safe);
}
