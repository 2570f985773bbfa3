#pragma once

#include "chunkvc/tensor.hpp"
#include "chunkvc/config.hpp"
#include "chunkvc/weights.hpp"
#include "chunkvc/dsp.hpp"
#include "chunkvc/content_extractor.hpp"
#include "chunkvc/style_encoder.hpp"
#include "chunkvc/acoustic_decoder.hpp"
#include "chunkvc/vocoder.hpp"
#include "chunkvc/pipeline.hpp"
#include "chunkvc/probes.hpp"
