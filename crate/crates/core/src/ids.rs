//! Identifiers and simulated block time.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }
    };
}

id_type!(ChainId, "chain#");
id_type!(TokenId, "token#");
id_type!(VaultId, "vault#");
id_type!(PoolId, "pool#");
id_type!(
    /// Ground-truth beneficial owner shared by related accounts.
    OwnerId,
    "owner#"
);

/// An account, carrying an immutable link to its beneficial owner.
///
/// The simulator knows which accounts share an owner; a real chain would not.
/// Ordering and equality are by `id` first, and `owner` never changes for a
/// given `id` within a run.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct AccountId {
    pub id: u32,
    pub owner: OwnerId,
}

impl AccountId {
    pub const fn new(id: u32, owner: OwnerId) -> Self {
        AccountId { id, owner }
    }

    /// An account that is its own beneficial owner.
    pub const fn solo(id: u32) -> Self {
        AccountId { id, owner: OwnerId(id) }
    }

    pub const MIN: AccountId = AccountId { id: 0, owner: OwnerId(0) };
    pub const MAX: AccountId = AccountId { id: u32::MAX, owner: OwnerId(u32::MAX) };
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acct#{}", self.id)
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acct#{}({})", self.id, self.owner)
    }
}

/// Height on a particular chain.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct BlockTime {
    pub chain: ChainId,
    pub height: u64,
}

impl BlockTime {
    pub const fn new(chain: ChainId, height: u64) -> Self {
        BlockTime { chain, height }
    }

    pub const fn plus(self, blocks: u64) -> Self {
        BlockTime { chain: self.chain, height: self.height + blocks }
    }

    /// Blocks elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: BlockTime) -> u64 {
        self.height.saturating_sub(earlier.height)
    }
}

/// Hands out fresh identifiers. One allocator per run keeps ids unique.
#[derive(Debug, Default, Clone)]
pub struct IdAllocator {
    next_account: u32,
    next_token: u32,
    next_vault: u32,
    next_pool: u32,
    next_chain: u32,
}

impl IdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chain(&mut self) -> ChainId {
        let id = ChainId(self.next_chain);
        self.next_chain += 1;
        id
    }

    pub fn token(&mut self) -> TokenId {
        let id = TokenId(self.next_token);
        self.next_token += 1;
        id
    }

    pub fn vault(&mut self) -> VaultId {
        let id = VaultId(self.next_vault);
        self.next_vault += 1;
        id
    }

    pub fn pool(&mut self) -> PoolId {
        let id = PoolId(self.next_pool);
        self.next_pool += 1;
        id
    }

    /// A new account owned by itself.
    pub fn account(&mut self) -> AccountId {
        let id = self.next_account;
        self.next_account += 1;
        AccountId::solo(id)
    }

    /// A new account linked to an existing beneficial owner.
    pub fn account_for(&mut self, owner: OwnerId) -> AccountId {
        let id = self.next_account;
        self.next_account += 1;
        AccountId::new(id, owner)
    }
}
