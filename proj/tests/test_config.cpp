// Key-value config parsing: comments, whitespace, typed getters, override
// merging, and the canonical text form.

#include <stdexcept>

#include <catch_amalgamated.hpp>

#include "rydfdm/config.hpp"

using rydfdm::Config;

TEST_CASE("parse handles comments, blanks, and whitespace") {
    const Config cfg = Config::parse(
        "# atom defaults\n"
        "\n"
        "omega_p = 1.2566e7\n"
        "  label =  hello world  \n"
        "count=42\n");
    REQUIRE(cfg.has("omega_p"));
    REQUIRE(cfg.get("label") == "hello world");
    REQUIRE(cfg.get_int("count") == 42);
    REQUIRE_FALSE(cfg.has("missing"));
}

TEST_CASE("typed getters parse numbers fully or throw") {
    const Config cfg = Config::parse(
        "x = 2.5e3\n"
        "n = -7\n"
        "bad = 12abc\n");
    REQUIRE(cfg.get_double("x") == 2500.0);
    REQUIRE(cfg.get_int("n") == -7);
    REQUIRE_THROWS_AS(cfg.get_double("bad"), std::exception);
    REQUIRE_THROWS_AS(cfg.get_int("bad"), std::exception);
    REQUIRE_THROWS_AS(cfg.get("missing"), std::exception);
}

TEST_CASE("fallback getters return defaults only when absent") {
    const Config cfg = Config::parse("x = 3\n");
    REQUIRE(cfg.get_double_or("x", 99.0) == 3.0);
    REQUIRE(cfg.get_double_or("y", 99.0) == 99.0);
    REQUIRE(cfg.get_int_or("y", -1) == -1);
    REQUIRE(cfg.get_or("y", "fallback") == "fallback");
}

TEST_CASE("malformed lines are rejected") {
    REQUIRE_THROWS_AS(Config::parse("just a bare line\n"), std::exception);
    REQUIRE_THROWS_AS(Config::parse("= 5\n"), std::exception);
}

TEST_CASE("merge_from lets overrides win") {
    Config base = Config::parse("a = 1\nb = 2\n");
    const Config over = Config::parse("b = 20\nc = 30\n");
    base.merge_from(over);
    REQUIRE(base.get_int("a") == 1);
    REQUIRE(base.get_int("b") == 20);
    REQUIRE(base.get_int("c") == 30);
}

TEST_CASE("to_text emits a canonical sorted form that round-trips") {
    Config cfg;
    cfg.set("zeta", "1");
    cfg.set("alpha", "2");
    cfg.set("mid", "3");
    const std::string text = cfg.to_text();
    REQUIRE(text == "alpha = 2\nmid = 3\nzeta = 1\n");

    const Config back = Config::parse(text);
    REQUIRE(back.to_text() == text);
}

TEST_CASE("values containing '=' keep everything after the first separator") {
    const Config cfg = Config::parse("expr = a=b\n");
    REQUIRE(cfg.get("expr") == "a=b");
}
