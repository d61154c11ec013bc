#pragma once

#include <lexbeam/decoder.hpp>
#include <lexbeam/error.hpp>
#include <lexbeam/filter.hpp>
#include <lexbeam/fsm.hpp>
#include <lexbeam/sampler.hpp>
#include <lexbeam/scorers.hpp>
#include <lexbeam/vocabulary.hpp>

namespace lexbeam {

inline constexpr const char* version = "0.1.0";

} // namespace lexbeam
