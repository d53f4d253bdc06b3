#pragma once

#include "tvtsyn/numerics/attention.hpp"
#include "tvtsyn/numerics/conv.hpp"
#include "tvtsyn/numerics/dense.hpp"
#include "tvtsyn/numerics/mel.hpp"
#include "tvtsyn/numerics/norm.hpp"
#include "tvtsyn/numerics/rope.hpp"
