#include <gtest/gtest.h>

#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "../support/fixtures.hpp"

using namespace decomind;
using testing_support::bedroom_request;
using testing_support::LocalServer;
using testing_support::one_each;

namespace {

struct Inputs {
    DesignRequest request = bedroom_request();
    PromptBundle prompt;
    ControlLayout layout;

    Inputs() {
        const auto sel = one_each(request.furniture_categories);
        prompt = build_prompt(request, sel);
        layout = compose_layout(request, place_furniture(request, sel).placements);
    }
};

GenerationParams small_params(std::uint64_t seed) {
    GenerationParams p;
    p.seed = seed;
    p.output_width = 128;
    p.output_height = 96;
    return p;
}

int closed_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

}  // namespace

TEST(GenerationParams, Validation) {
    EXPECT_NO_THROW(validate_params(GenerationParams{}));
    auto p = GenerationParams{};
    p.steps = 0;
    EXPECT_THROW(validate_params(p), ParameterError);
    p = {};
    p.conditioning_scale = 2.5;
    EXPECT_THROW(validate_params(p), ParameterError);
    p = {};
    p.output_width = 500;
    EXPECT_THROW(validate_params(p), ParameterError);
    p = {};
    p.guidance_scale = -1;
    EXPECT_THROW(validate_params(p), ParameterError);
}

TEST(GenerationParams, JsonShape) {
    const json j = small_params(3);
    EXPECT_EQ(j.at("output_size"), json::array({128, 96}));
    EXPECT_EQ(j.get<GenerationParams>(), small_params(3));
}

TEST(StubBackend, DeterministicAndSeedSensitive) {
    Inputs in;
    StubBackend backend;
    const auto a = generate(in.prompt, in.layout, small_params(1), backend);
    const auto b = generate(in.prompt, in.layout, small_params(1), backend);
    const auto c = generate(in.prompt, in.layout, small_params(2), backend);
    EXPECT_EQ(encode_png(a.image), encode_png(b.image));
    EXPECT_NE(a.image.pixels, c.image.pixels);
    EXPECT_EQ(a.image.width, 128);
    EXPECT_EQ(a.image.height, 96);
    EXPECT_EQ(a.backend_id, "stub-v1");
}

TEST(StubBackend, StampCarriesPromptDigest) {
    Inputs in;
    StubBackend backend;
    const auto d = generate(in.prompt, in.layout, small_params(5), backend);
    const auto stamp = decode_prompt_stamp(d.image);
    ASSERT_TRUE(stamp.has_value());
    EXPECT_EQ(*stamp, sha256(canonical_json(in.prompt)));
    EXPECT_EQ(decode_palette_stamp(d.image), stub_palette_index(5));
    EXPECT_FALSE(decode_prompt_stamp(in.layout.image).has_value());
}

TEST(GeneratedDesign, LayoutHashMatchesUsedLayout) {
    Inputs in;
    StubBackend backend;
    const auto d = generate(in.prompt, in.layout, small_params(1), backend);
    EXPECT_EQ(d.layout_hash, sha256_hex(encode_png(in.layout.image)));

    ControlLayout tampered = in.layout;
    tampered.image.set_rgb(10, 10, {1, 2, 3});
    EXPECT_NE(d.layout_hash, layout_digest(tampered));
}

TEST(ProbeBackend, StubIsHealthy) {
    StubBackend backend;
    const auto h = probe_backend(backend);
    EXPECT_EQ(h.status, BackendStatus::healthy);
    EXPECT_EQ(h.backend_id, "stub-v1");
    EXPECT_GE(h.max_width, 512);
}

TEST(Generate, RefusesSizesAboveBackendMaximum) {
    Inputs in;
    StubBackend backend;
    auto p = small_params(1);
    p.output_width = p.output_height = 4096;
    EXPECT_THROW(generate(in.prompt, in.layout, p, backend), ParameterError);
}

TEST(Generate, TimeoutIsAGenerationErrorWithHint) {
    Inputs in;
    StubBackend slow(std::chrono::milliseconds(400));
    try {
        generate(in.prompt, in.layout, small_params(1), slow, std::chrono::milliseconds(50));
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_FALSE(e.retry_hint().empty());
    }
}

TEST(Sidecar, RoundTripMatchesInProcessStub) {
    Inputs in;
    LocalServer srv;
    register_sidecar_routes(srv.server(), std::make_shared<StubBackend>());
    HttpSidecarBackend remote(srv.url());
    const auto h = probe_backend(remote);
    EXPECT_EQ(h.status, BackendStatus::healthy);
    EXPECT_EQ(h.backend_id, "stub-v1");

    StubBackend local;
    const auto a = generate(in.prompt, in.layout, small_params(9), remote);
    const auto b = generate(in.prompt, in.layout, small_params(9), local);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.backend_id, "stub-v1");

    auto big = small_params(1);
    big.output_width = big.output_height = 4096;
    EXPECT_THROW(generate(in.prompt, in.layout, big, remote), ParameterError);
}

TEST(Sidecar, RejectsBadParamsWithParameterError) {
    Inputs in;
    LocalServer srv;
    register_sidecar_routes(srv.server(), std::make_shared<StubBackend>());
    HttpSidecarBackend remote(srv.url());
    auto p = small_params(1);
    p.output_width = 16;  // below the stub's stamp width
    EXPECT_THROW(generate(in.prompt, in.layout, p, remote), ParameterError);
}

TEST(Sidecar, UnreachableWithinFiveSeconds) {
    HttpSidecarBackend remote("http://127.0.0.1:" + std::to_string(closed_port()));
    const auto t0 = std::chrono::steady_clock::now();
    const auto h = probe_backend(remote);
    EXPECT_EQ(h.status, BackendStatus::unreachable);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));

    Inputs in;
    EXPECT_THROW(generate(in.prompt, in.layout, small_params(1), remote), GenerationError);
}
