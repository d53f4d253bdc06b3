#pragma once

#include "tvtsyn/config.hpp"
#include "tvtsyn/content_encoder.hpp"
#include "tvtsyn/decoder.hpp"
#include "tvtsyn/error.hpp"
#include "tvtsyn/layers.hpp"
#include "tvtsyn/metrics.hpp"
#include "tvtsyn/model.hpp"
#include "tvtsyn/numerics.hpp"
#include "tvtsyn/prosody.hpp"
#include "tvtsyn/streaming.hpp"
#include "tvtsyn/tensor.hpp"
#include "tvtsyn/tvt.hpp"
#include "tvtsyn/wav.hpp"
#include "tvtsyn/weights.hpp"
