#pragma once

#include "uap/attack.hpp"
#include "uap/audio.hpp"
#include "uap/config.hpp"
#include "uap/ctc.hpp"
#include "uap/dsp.hpp"
#include "uap/error.hpp"
#include "uap/harness.hpp"
#include "uap/io.hpp"
#include "uap/metrics.hpp"
#include "uap/nn.hpp"
#include "uap/synth.hpp"
