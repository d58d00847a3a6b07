//! Fixed Diffie-Hellman groups.
//!
//! The 1024-bit group is Oakley group 2 (RFC 2409); 2048/3072/4096 are the
//! RFC 3526 MODP groups 14, 15 and 16. The 256- and 512-bit groups are the
//! largest safe primes below `2^bits` with `p ≡ 23 (mod 24)`. Every group
//! uses generator 2.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{Num, One};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupId {
    Fixed256,
    Fixed512,
    Modp1024,
    Modp2048,
    Modp3072,
    Modp4096,
}

const MODP1024_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF";

const MODP2048_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AACAA68FFFFFFFFFFFFFFFF";

const MODP3072_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AAAC42DAD33170D04507A33A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7\
ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864D87602733EC86A64521F2B18177B200C\
BBE117577A615D6C770988C0BAD946E208E24FA074E5AB3143DB5BFCE0FD108E4B82D120A93AD2CAFFFFFFFFFFFFFFFF";

const MODP4096_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AAAC42DAD33170D04507A33A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7\
ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864D87602733EC86A64521F2B18177B200C\
BBE117577A615D6C770988C0BAD946E208E24FA074E5AB3143DB5BFCE0FD108E4B82D120A92108011A723C12A787E6D7\
88719A10BDBA5B2699C327186AF4E23C1A946834B6150BDA2583E9CA2AD44CE8DBBBC2DB04DE8EF92E8EFC141FBECAA6\
287C59474E6BC05D99B2964FA090C3A2233BA186515BE7ED1F612970CEE2D7AFB81BDD762170481CD0069127D5B05AA9\
93B4EA988D8FDDC186FFB7DC90A6C08F4DF435C934063199FFFFFFFFFFFFFFFF";

impl GroupId {
    pub const ALL: [GroupId; 6] = [
        GroupId::Fixed256,
        GroupId::Fixed512,
        GroupId::Modp1024,
        GroupId::Modp2048,
        GroupId::Modp3072,
        GroupId::Modp4096,
    ];

    pub fn bits(self) -> u32 {
        match self {
            GroupId::Fixed256 => 256,
            GroupId::Fixed512 => 512,
            GroupId::Modp1024 => 1024,
            GroupId::Modp2048 => 2048,
            GroupId::Modp3072 => 3072,
            GroupId::Modp4096 => 4096,
        }
    }

    /// The fixed group with a modulus of exactly `bits` bits, if any.
    pub fn for_bits(bits: u32) -> Option<GroupId> {
        GroupId::ALL.into_iter().find(|g| g.bits() == bits)
    }

    /// Identifier carried in public-key messages. `0` is reserved for generated groups.
    pub fn wire_id(self) -> u8 {
        match self {
            GroupId::Fixed256 => 1,
            GroupId::Fixed512 => 2,
            GroupId::Modp1024 => 3,
            GroupId::Modp2048 => 4,
            GroupId::Modp3072 => 5,
            GroupId::Modp4096 => 6,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<GroupId> {
        GroupId::ALL.into_iter().find(|g| g.wire_id() == id)
    }

    pub(crate) fn prime(self) -> BigUint {
        let hex = match self {
            GroupId::Fixed256 => return (BigUint::one() << 256u32) - 36_113u32,
            GroupId::Fixed512 => return (BigUint::one() << 512u32) - 235_937u32,
            GroupId::Modp1024 => MODP1024_HEX,
            GroupId::Modp2048 => MODP2048_HEX,
            GroupId::Modp3072 => MODP3072_HEX,
            GroupId::Modp4096 => MODP4096_HEX,
        };
        BigUint::from_str_radix(hex, 16).expect("group constants are valid hex")
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GroupId::Fixed256 => "FIXED256",
            GroupId::Fixed512 => "FIXED512",
            GroupId::Modp1024 => "MODP1024",
            GroupId::Modp2048 => "MODP2048",
            GroupId::Modp3072 => "MODP3072",
            GroupId::Modp4096 => "MODP4096",
        };
        f.write_str(name)
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupId::ALL
            .into_iter()
            .find(|g| g.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown group {s}")))
    }
}
