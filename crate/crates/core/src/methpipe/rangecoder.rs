//! Adaptive binary range coder (LZMA-style carry handling) with an
//! order-0 bit-tree byte model.

const TOP: u32 = 1 << 24;
const PROB_BITS: u32 = 11;
const PROB_INIT: u16 = 1 << (PROB_BITS - 1);
const MOVE_BITS: u32 = 5;

/// Adaptive model for one byte stream: a 256-leaf binary tree of bit
/// probabilities.
#[derive(Clone)]
pub struct ByteModel {
    probs: [u16; 256],
}

impl Default for ByteModel {
    fn default() -> Self {
        ByteModel {
            probs: [PROB_INIT; 256],
        }
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    fn encode_bit(&mut self, prob: &mut u16, bit: u32) {
        let bound = (self.range >> PROB_BITS) * (*prob as u32);
        if bit == 0 {
            self.range = bound;
            *prob += ((1 << PROB_BITS) - *prob) >> MOVE_BITS;
        } else {
            self.low += bound as u64;
            self.range -= bound;
            *prob -= *prob >> MOVE_BITS;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_byte(&mut self, model: &mut ByteModel, byte: u8) {
        let mut ctx = 1usize;
        for i in (0..8).rev() {
            let bit = ((byte >> i) & 1) as u32;
            self.encode_bit(&mut model.probs[ctx], bit);
            ctx = (ctx << 1) | bit as usize;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
    overrun: bool,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut dec = RangeDecoder {
            input,
            pos: 0,
            range: u32::MAX,
            code: 0,
            overrun: false,
        };
        for _ in 0..5 {
            dec.code = (dec.code << 8) | dec.next() as u32;
        }
        dec
    }

    fn next(&mut self) -> u8 {
        match self.input.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.overrun = true;
                0
            }
        }
    }

    /// True if decoding needed bytes past the end of the input.
    pub fn overrun(&self) -> bool {
        self.overrun
    }

    fn decode_bit(&mut self, prob: &mut u16) -> u32 {
        let bound = (self.range >> PROB_BITS) * (*prob as u32);
        let bit = if self.code < bound {
            self.range = bound;
            *prob += ((1 << PROB_BITS) - *prob) >> MOVE_BITS;
            0
        } else {
            self.code -= bound;
            self.range -= bound;
            *prob -= *prob >> MOVE_BITS;
            1
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next() as u32;
        }
        bit
    }

    pub fn decode_byte(&mut self, model: &mut ByteModel) -> u8 {
        let mut ctx = 1usize;
        for _ in 0..8 {
            let bit = self.decode_bit(&mut model.probs[ctx]);
            ctx = (ctx << 1) | bit as usize;
        }
        (ctx & 0xFF) as u8
    }
}
