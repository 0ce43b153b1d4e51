#pragma once

// Data files compiled into the library (see data/ and src/embedded.cpp.in).
namespace vidfp::embedded {

extern const char* const providers_json;
extern const char* const quic_params_json;
extern const char* const attributes_json;
extern const char* const profiles_json;

}  // namespace vidfp::embedded
