//! Worked example: a program, its output, and the value annotated on each line.

pub const GOLD_PROGRAM: &str = "\
sequence_1 = range_func_up(149, 171)  # [149, 150, ..., 170, 171]
sequence_2 = range_func_up(18, 28)    # [18, 19, ..., 27, 28]
sequence_3 = repeat_num(22, 237)      # [237, 237, ..., 237, 237]
sequence_4 = range_func_up(142, 155)  # [142, 143, ..., 154, 155]
sequence_5 = reverse_list(sequence_2) # [28, 27, ..., 19, 18]
sequence_6 = substitute(sequence_1, 165, 174) # [149, 150, ..., 170, 171]
sequence_7 = substitute(sequence_2, 28, 177)  # [18, 19, ..., 26, 177]
sequence_8 = substitute(sequence_5, 27, 177)  # [28, 177, ..., 19, 18]
sequence_9 = concatenate(sequence_2, sequence_3) # [18, 19, ..., 237, 237]
sequence_10 = concatenate(sequence_9, sequence_4) # [18, 19, ..., 154, 155]
sequence_11 = concatenate(sequence_10, sequence_5) # [18, 19, ..., 19, 18]
sequence_12 = concatenate(sequence_11, sequence_6) # [18, 19, ..., 170, 171]
sequence_13 = concatenate(sequence_12, sequence_7) # [18, 19, ..., 26, 177]
sequence_14 = concatenate(sequence_13, sequence_8) # [18, 19, ..., 19, 18]
sequence_15 = interleave(sequence_14, sequence_1)  # [18, 149, ..., 170, 171]
sequence_16 = concatenate(sequence_15, sequence_8) # [18, 149, ..., 19, 18]
sequence_17 = concatenate(sequence_16, sequence_1) # [18, 149, ..., 170, 171]
output = sequence_17 # [18, 149, ..., 170, 171]
";

pub const GOLD_SEQUENCE: [u8; 160] = [
    18, 149, 19, 150, 20, 151, 21, 152, 22, 153, 23, 154, 24, 155, 25, 156, 26, 157, 27, 158, 28,
    159, 237, 160, 237, 161, 237, 162, 237, 163, 237, 164, 237, 165, 237, 166, 237, 167, 237, 168,
    237, 169, 237, 170, 237, 171, 237, 237, 237, 237, 237, 237, 237, 237, 237, 237, 142, 143, 144,
    145, 146, 147, 148, 149, 150, 151, 152, 153, 154, 155, 28, 27, 26, 25, 24, 23, 22, 21, 20, 19,
    18, 149, 150, 151, 152, 153, 154, 155, 156, 157, 158, 159, 160, 161, 162, 163, 164, 174, 166,
    167, 168, 169, 170, 171, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 177, 28, 177, 26, 25, 24, 23,
    22, 21, 20, 19, 18, 28, 177, 26, 25, 24, 23, 22, 21, 20, 19, 18, 149, 150, 151, 152, 153, 154,
    155, 156, 157, 158, 159, 160, 161, 162, 163, 164, 165, 166, 167, 168, 169, 170, 171,
];

/// Lines (0-based) whose annotation disagrees with the recorded output
/// sequence: (line, annotation as written, value the sequence implies).
pub const ANNOTATION_ERRATA: [(usize, &str, &str); 3] = [
    (6, "[18, 19, ..., 26, 177]", "[18, 19, ..., 27, 177]"),
    (12, "[18, 19, ..., 26, 177]", "[18, 19, ..., 27, 177]"),
    (14, "[18, 149, ..., 170, 171]", "[18, 149, ..., 19, 18]"),
];
