use ibn_core::gen::strategies::{body, message};
use ibn_core::proto::{decode_frame, encode_frame, Message};
use proptest::prelude::*;

proptest! {
    #[test]
    fn frames_round_trip(m in message()) {
        let bytes = encode_frame(&m).unwrap();
        prop_assert_eq!(decode_frame(&bytes).unwrap(), Some((m, bytes.len())));
    }

    #[test]
    fn concatenated_frames_split_cleanly(bodies in prop::collection::vec(body(), 1..6), cut in any::<prop::sample::Index>()) {
        let msgs: Vec<Message> = bodies.into_iter().enumerate().map(|(i, b)| Message::new(i as u32, b)).collect();
        let stream: Vec<u8> = msgs.iter().flat_map(|m| encode_frame(m).unwrap()).collect();
        // Feed the stream in two arbitrary pieces, as a socket might.
        let cut = cut.index(stream.len() + 1);
        let mut buf = stream[..cut].to_vec();
        let mut got = Vec::new();
        let mut pending = Some(&stream[cut..]);
        loop {
            match decode_frame(&buf).unwrap() {
                Some((m, used)) => {
                    got.push(m);
                    buf.drain(..used);
                }
                None => match pending.take() {
                    Some(rest) => buf.extend_from_slice(rest),
                    None => break,
                },
            }
        }
        prop_assert!(buf.is_empty());
        prop_assert_eq!(got, msgs);
    }
}
