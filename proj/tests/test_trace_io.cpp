#include <doctest.h>

#include <fstream>

#include "emguard/errors.hpp"
#include "emguard/noise.hpp"
#include "emguard/trace_io.hpp"
#include "test_helpers.hpp"

using namespace emguard;

namespace {

TraceMatrix sample_matrix() {
    const Program base = default_monitored_loop();
    const Program injected = inject_instruction(base, 3, Instruction::jmp());
    return add_awgn(generate_dataset(base, injected, 6, 4, {}, 11), -3.5, 2);
}

void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

} // namespace

TEST_SUITE("signal-model") {

TEST_CASE("binary round trip is exact, labels and metadata included") {
    testing::TempDir dir("io_bin");
    const TraceMatrix m = sample_matrix();
    save_traces(m, dir / "t.emtr", TraceFormat::Binary);
    const TraceMatrix back = load_traces(dir / "t.emtr", TraceFormat::Binary);
    CHECK(back.samples == m.samples);
    CHECK(back.labels == m.labels);
    CHECK(back.meta == m.meta);
}

TEST_CASE("binary layout: magic, version, counts, little-endian doubles, label bytes") {
    testing::TempDir dir("io_layout");
    Matrix x(2, 1);
    x << 1.0, -2.0;
    save_traces(TraceMatrix(x, {Label::Benign, Label::Anomalous}), dir / "t.emtr", TraceFormat::Binary);
    std::ifstream in(dir / "t.emtr", std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 4 + 1 + 4 + 4 + 16 + 2);
    CHECK(bytes.substr(0, 4) == "EMTR");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 2);
    CHECK(bytes[9] == 1);
    // 1.0 is 0x3FF0000000000000; little-endian puts 0xF0 0x3F last.
    CHECK(static_cast<unsigned char>(bytes[13 + 6]) == 0xF0);
    CHECK(static_cast<unsigned char>(bytes[13 + 7]) == 0x3F);
    CHECK(bytes[29] == 0);
    CHECK(bytes[30] == 1);
}

TEST_CASE("csv round trip keeps every sample to at least 12 significant digits") {
    testing::TempDir dir("io_csv");
    const TraceMatrix m = sample_matrix();
    save_traces(m, dir / "t.csv", TraceFormat::Csv);
    const TraceMatrix back = load_traces(dir / "t.csv", TraceFormat::Csv);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    for (Eigen::Index i = 0; i < m.samples.size(); ++i) {
        const double a = m.samples.data()[i];
        CHECK(std::abs(back.samples.data()[i] - a) <= 1e-12 * std::abs(a));
    }
    CHECK(back.labels == m.labels);
    CHECK(back.meta == m.meta);
}

TEST_CASE("csv without sidecar loads as benign; comment lines are skipped") {
    testing::TempDir dir("io_plain");
    write(dir / "p.csv", "# label=anomalous\n1,2,3\n4, 5 ,6\r\n\n");
    const TraceMatrix m = load_traces(dir / "p.csv", TraceFormat::Csv);
    CHECK(m.rows() == 2);
    CHECK(m.samples(1, 1) == 5.0);
    CHECK(m.count(Label::Benign) == 2);
}

TEST_CASE("malformed input is rejected") {
    testing::TempDir dir("io_bad");
    write(dir / "ragged.csv", "1,2,3\n4,5\n");
    CHECK_THROWS_AS(load_traces(dir / "ragged.csv", TraceFormat::Csv), FormatError);
    write(dir / "empty.csv", "");
    CHECK_THROWS_AS(load_traces(dir / "empty.csv", TraceFormat::Csv), FormatError);
    write(dir / "blank.csv", "\n# only a comment\n");
    CHECK_THROWS_AS(load_traces(dir / "blank.csv", TraceFormat::Csv), FormatError);
    write(dir / "text.csv", "1,abc\n");
    CHECK_THROWS_AS(load_traces(dir / "text.csv", TraceFormat::Csv), FormatError);
    write(dir / "empty.emtr", "");
    CHECK_THROWS_AS(load_traces(dir / "empty.emtr", TraceFormat::Binary), FormatError);
    write(dir / "magic.emtr", std::string("XXXX\x01\x01\0\0\0\x01\0\0\0", 13) + std::string(9, '\0'));
    CHECK_THROWS_AS(load_traces(dir / "magic.emtr", TraceFormat::Binary), FormatError);
    CHECK_THROWS_AS(load_traces(dir / "missing.emtr", TraceFormat::Binary), IoError);

    const TraceMatrix m = sample_matrix();
    save_traces(m, dir / "t.emtr", TraceFormat::Binary);
    std::ifstream in(dir / "t.emtr", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    write(dir / "short.emtr", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_traces(dir / "short.emtr", TraceFormat::Binary), FormatError);
    bytes.back() = 7;
    write(dir / "label.emtr", bytes);
    CHECK_THROWS_AS(load_traces(dir / "label.emtr", TraceFormat::Binary), FormatError);

    write(dir / "two.csv", "1,2\n3,4\n");
    write(dir / "two.csv.meta.json", R"({"rows":[{"index":0,"label":"benign"}]})");
    CHECK_THROWS_AS(load_traces(dir / "two.csv", TraceFormat::Csv), FormatError);
}

TEST_CASE("sidecar carries extra fields") {
    testing::TempDir dir("io_extra");
    const TraceMatrix m = sample_matrix();
    save_traces(m, dir / "t.csv", TraceFormat::Csv, {{"manifest", {{"seed", 9}}}});
    const auto side = load_sidecar(dir / "t.csv");
    CHECK(side["manifest"]["seed"] == 9);
    CHECK(side["rows"].size() == m.rows());
    CHECK(format_for_path("x.csv") == TraceFormat::Csv);
    CHECK(format_for_path("x.emtr") == TraceFormat::Binary);
    CHECK_THROWS_AS(parse_trace_format("xml"), InvalidParameter);
}

}
