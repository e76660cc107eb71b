#include <doctest.h>

#include <random>
#include <set>

#include "proxysynth/error.hpp"
#include "proxysynth/grammar.hpp"
#include "proxysynth/synth.hpp"
#include "support.hpp"

using namespace proxysynth;

namespace {

SynthSpec ring_spec(int world, std::uint64_t outer, double jitter = 0.0) {
  SynthSpec spec;
  spec.world_size = world;
  spec.outer_iterations = outer;
  spec.seed = 99;
  spec.phases = {PhaseSpec{.iterations = 1, .pattern = Pattern::Ring, .volume = 256,
                           .compute = {4000, 5000, 900, 30, 300, 10}, .jitter = jitter}};
  return spec;
}

}  // namespace

TEST_CASE("splitmix64 reference outputs") {
  // First outputs from state 0 of the published generator.
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xE220A8397B1DCDAFull);
  CHECK(splitmix64(s) == 0x6E789E6AA1B965F4ull);
  CHECK(splitmix64(s) == 0x06C45D188009454Full);
  std::uint64_t t = 0;
  splitmix64(t);
  CHECK(rank_seed(0, 1) == splitmix64(t));
}

TEST_CASE("ring on four ranks") {
  const Trace t = generate_rank(ring_spec(4, 1), 2);
  REQUIRE(t.events.size() == 4);
  CHECK(std::holds_alternative<ComputeEvent>(t.events[0]));
  const auto& irecv = std::get<CommEvent>(t.events[1]);
  const auto& send = std::get<CommEvent>(t.events[2]);
  const auto& wait = std::get<CommEvent>(t.events[3]);
  CHECK(irecv.func == MpiFunc::Irecv);
  CHECK(irecv.peer == Peer::absolute(1));
  CHECK(send.func == MpiFunc::Send);
  CHECK(send.peer == Peer::absolute(3));
  CHECK(wait.req == irecv.req);
  CHECK(generate_rank(ring_spec(4, 1), 3).events.size() == 4);
  CHECK(std::get<CommEvent>(generate_rank(ring_spec(4, 1), 3).events[2]).peer ==
        Peer::absolute(0));
}

TEST_CASE("generation is deterministic per seed") {
  const SynthSpec spec = example_spec(6, 20);
  CHECK(generate(spec, Execution::Serial) == generate(spec, Execution::Serial));
  SynthSpec other = spec;
  other.seed += 1;
  CHECK(generate_rank(other, 3) != generate_rank(spec, 3));
}

TEST_CASE("generated traces are valid and parse back") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int world = 1 + static_cast<int>(rng() % 9);
    const SynthSpec spec = testing::random_spec(rng, world, 2000);
    for (const Trace& t : generate(spec)) {
      for (const auto& e : t.events) CHECK_NOTHROW(std::visit([](const auto& x) { validate(x); }, e));
      REQUIRE(parse_trace(serialize_trace(t), t.rank) == t);
      // handles must be balanced for canonicalization to succeed
      CHECK_NOTHROW(canonicalize(t, world));
    }
  }
}

TEST_CASE("no jitter gives a fixed compute alphabet") {
  const auto a = canonicalize(generate_rank(ring_spec(4, 10), 1), 4, {0.0});
  const auto b = canonicalize(generate_rank(ring_spec(4, 1000), 1), 4, {0.0});
  CHECK(a.table == b.table);
  CHECK(a.table.size() == 4);
}

TEST_CASE("jitter stays within its bound and clusters away") {
  const double j = 0.01;
  const Trace t = generate_rank(ring_spec(4, 500, j), 0);
  const Metrics base{4000, 5000, 900, 30, 300, 10};
  std::size_t distinct = 0;
  std::set<Metrics> seen;
  for (const auto& e : t.events) {
    if (const auto* c = std::get_if<ComputeEvent>(&e)) {
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        const double b = static_cast<double>(base[m]);
        CHECK(std::abs(static_cast<double>(c->metrics[m]) - b) <= j * b + 1.0);
      }
      if (seen.insert(c->metrics).second) ++distinct;
    }
  }
  CHECK(distinct > 1);
  // within 5 percent every span joins the first
  CHECK(canonicalize(t, 4, {0.05}).table.size() == 4);
}

TEST_CASE("doubling the iterations keeps the grammar size") {
  for (int world : {1, 4}) {
    const SynthSpec s1 = example_spec(world, 64);
    const SynthSpec s2 = example_spec(world, 128);
    for (int r = 0; r < world; ++r) {
      const auto g1 = build_grammar(canonicalize(generate_rank(s1, r), world).ids);
      const auto g2 = build_grammar(canonicalize(generate_rank(s2, r), world).ids);
      CHECK(grammar_size(g1) == grammar_size(g2));
    }
  }
}

TEST_CASE("streamed events equal the built trace") {
  const SynthSpec spec = example_spec(3, 7);
  std::vector<Event> streamed;
  generate_rank_events(spec, 1, [&](const Event& e) { streamed.push_back(e); });
  CHECK(streamed == generate_rank(spec, 1).events);
}

TEST_CASE("spec JSON round-trip and validation") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const SynthSpec spec = testing::random_spec(rng, 1 + static_cast<int>(rng() % 8), 1000);
    CHECK(spec_from_json(spec_to_json(spec)) == spec);
  }
  CHECK_THROWS_AS(spec_from_json("{"), Error);
  CHECK_THROWS_AS(spec_from_json(R"({"world_size": 2, "phases": [{"pattern": "mesh"}]})"), Error);
  SynthSpec bad = example_spec(2, 1);
  bad.phases[0].jitter = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = example_spec(2, 1);
  bad.world_size = 0;
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("stencil neighbours are symmetric") {
  SynthSpec spec;
  spec.world_size = 6;
  spec.phases = {PhaseSpec{.iterations = 1, .pattern = Pattern::Stencil, .volume = 8}};
  std::vector<std::set<std::int64_t>> sends(6), recvs(6);
  for (int r = 0; r < 6; ++r) {
    for (const auto& e : generate_rank(spec, r).events) {
      const auto* c = std::get_if<CommEvent>(&e);
      if (!c) continue;
      if (c->func == MpiFunc::Isend) sends[r].insert(c->peer->value);
      if (c->func == MpiFunc::Irecv) recvs[r].insert(c->peer->value);
    }
  }
  for (int r = 0; r < 6; ++r) {
    CHECK(sends[r] == recvs[r]);
    for (auto p : sends[r]) CHECK(recvs[static_cast<std::size_t>(p)].count(r) == 1);
  }
}
